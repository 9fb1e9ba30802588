//! Shared fixtures: reduction tables built once and cached on disk.
//!
//! A full-budget table takes tens of minutes; the tests use one Monte Carlo
//! run of 65536 steps per chaotic parameter. Quadrature then averages the
//! per-node noise over thousands of nodes inside the law's support.

#![allow(dead_code)]

use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::OnceLock;

use lrt_core::micro::ObservableKind;
use lrt_core::reduction::spectral::DEFAULT_MAX_LAG;
use lrt_core::reduction::{ReductionTable, TableConfig};
use lrt_core::rng::SeedTree;

pub const TABLE_SEED: u64 = 2024;
pub const TABLE_MC_RUNS: usize = 1;
pub const TABLE_MC_STEPS: usize = 65_536;

pub fn table_config(observable: ObservableKind) -> TableConfig {
    TableConfig {
        mc_runs: TABLE_MC_RUNS,
        mc_steps: TABLE_MC_STEPS,
        ..TableConfig::new(observable, DEFAULT_MAX_LAG)
    }
}

fn cache_path(config: &TableConfig) -> PathBuf {
    let name = format!(
        "table-{}-g{}-{}-{}-l{}-r{}-s{}-seed{}.csv",
        config.observable.name(),
        config.grid.points,
        config.grid.min,
        config.grid.max,
        config.lags,
        config.mc_runs,
        config.mc_steps,
        TABLE_SEED
    );
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn load_or_build(observable: ObservableKind) -> ReductionTable {
    let config = table_config(observable);
    let path = cache_path(&config);
    if let Ok(file) = File::open(&path) {
        if let Ok(table) = ReductionTable::read_csv(BufReader::new(file), observable) {
            if table.grid() == &config.grid && table.lags() == config.lags {
                return table;
            }
        }
    }
    let table = ReductionTable::build(&config, &SeedTree::new(TABLE_SEED)).expect("table build");
    // Write then rename, so concurrent test binaries never read half a file.
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let written = File::create(&tmp)
        .map_err(lrt_core::Error::from)
        .and_then(|f| table.write_csv(std::io::BufWriter::new(f)));
    if written.is_ok() {
        let _ = fs::rename(&tmp, &path);
    } else {
        let _ = fs::remove_file(&tmp);
    }
    table
}

pub fn mzq_table() -> &'static ReductionTable {
    static TABLE: OnceLock<ReductionTable> = OnceLock::new();
    TABLE.get_or_init(|| load_or_build(ObservableKind::MeanZeroQuadratic))
}

pub fn square_table() -> &'static ReductionTable {
    static TABLE: OnceLock<ReductionTable> = OnceLock::new();
    TABLE.get_or_init(|| load_or_build(ObservableKind::Square))
}
