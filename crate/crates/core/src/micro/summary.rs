use std::io::Write;

use super::Trajectory;
use crate::{Error, Result};

pub const DEFAULT_BINS: usize = 1000;

/// Density-normalized histogram on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub densities: Vec<f64>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        1.0 / self.centers.len() as f64
    }

    /// `∫ |ρ₁ − ρ₂|` between two histograms on the same bins.
    pub fn l1_distance(&self, other: &Histogram) -> Result<f64> {
        if self.centers.len() != other.centers.len() {
            return Err(Error::config("histograms have different bin counts"));
        }
        Ok(self
            .densities
            .iter()
            .zip(&other.densities)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.bin_width())
    }
}

pub fn empirical_density(samples: &[f64], bins: usize) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("empty sample set".into()));
    }
    if bins == 0 {
        return Err(Error::config("bins must be at least 1"));
    }
    let mut counts = vec![0u64; bins];
    for &x in samples {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::config(format!("sample {x} outside [0, 1]")));
        }
        let k = ((x * bins as f64) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let width = 1.0 / bins as f64;
    let norm = 1.0 / (samples.len() as f64 * width);
    Ok(Histogram {
        centers: (0..bins).map(|k| (k as f64 + 0.5) * width).collect(),
        densities: counts.iter().map(|&c| c as f64 * norm).collect(),
    })
}

/// Sample mean followed by central moments of orders `2..=kmax`.
pub fn centred_moments(samples: &[f64], kmax: usize) -> Result<Vec<f64>> {
    if kmax == 0 {
        return Err(Error::config("kmax must be at least 1"));
    }
    if samples.is_empty() || (kmax >= 2 && samples.len() < 2) {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot give moments up to order {kmax}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mut out = vec![mean];
    for k in 2..=kmax {
        out.push(
            samples
                .iter()
                .map(|x| (x - mean).powi(k as i32))
                .sum::<f64>()
                / n,
        );
    }
    Ok(out)
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "Q", "Z"])?;
    for (n, (q, z)) in traj.q.iter().zip(&traj.z).enumerate() {
        w.write_record([n.to_string(), q.to_string(), z.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(hist: &Histogram, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin_center", "density"])?;
    for (c, d) in hist.centers.iter().zip(&hist.densities) {
        w.write_record([c.to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(
            empirical_density(&[], 10),
            Err(Error::InsufficientData(_))
        ));
        assert!(centred_moments(&[1.0], 2).is_err());
    }

    #[test]
    fn uniform_samples_are_flat() {
        let mut rng = SeedTree::new(2).stream(0, 0, 0);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>()).collect();
        let h = empirical_density(&xs, 20).unwrap();
        // Each bin holds 5e4 counts; 5 standard errors is ~2.2% relative.
        assert!(h.densities.iter().all(|d| (d - 1.0).abs() < 0.025));

        let m = centred_moments(&xs, 4).unwrap();
        assert!((m[0] - 0.5).abs() < 3.0 * (1.0 / 12.0 / 1e6_f64).sqrt());
        assert!((m[1] - 1.0 / 12.0).abs() < 3e-4);
        assert!(m[2].abs() < 3e-4);
        assert!((m[3] - 1.0 / 80.0).abs() < 3e-4);
    }

    #[test]
    fn constant_samples_have_no_spread() {
        let m = centred_moments(&[0.3; 50], 4).unwrap();
        assert!(m[1..].iter().all(|v| v.abs() < 1e-30), "{m:?}");
    }

    proptest! {
        #[test]
        fn density_integrates_to_one(xs in prop::collection::vec(0.0f64..=1.0, 1..200), bins in 1usize..300) {
            let h = empirical_density(&xs, bins).unwrap();
            let total: f64 = h.densities.iter().sum::<f64>() * h.bin_width();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
