#![allow(dead_code)]

use dyadshift_bench::{Resolved, Suite, SuiteConfig};
use serde_json::{json, Value};

/// A quick configuration of every suite, small enough for repeated runs.
pub fn small_json(suite: Suite, seed: u64) -> Value {
    let fast = json!({"restarts": 2, "iterations": 10});
    let four = json!([[0, 0, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1], [1, 1, 1, 1]]);
    let mut v = match suite {
        Suite::HaarCalculus => json!({"grids": [{"axes": 2, "dim": 1, "levels": 2}], "trials": 1}),
        Suite::Identity318 => json!({"levels": [3], "depths": [[0, 0, 0, 0], [1, 2, 0, 1]], "trials": 2}),
        Suite::Model41 => json!({"levels": [3], "depths": [[0, 1], [2, 0]], "trials": 2}),
        Suite::L2Contraction => json!({"levels": [4], "depths": [[0, 0], [1, 2]], "trials": 2}),
        Suite::ShiftGrowth => json!({
            "levels": [3], "lattice_dims": [1], "exponents": [[3, 1.5, 3]], "depths": four, "search": fast
        }),
        Suite::PartialParaproduct61 => json!({
            "levels": [2], "lattice_dims": [1], "depths": [[0, 0], [0, 1], [1, 0], [1, 1]], "sizes": [1, 2], "search": fast
        }),
        Suite::ParaproductRbound54 | Suite::ParaproductRbound55 | Suite::ParaproductRbound56 => json!({
            "levels": [2], "lattice_dims": [1], "exponents": [[1.5, 3]], "sizes": [2, 4], "search": fast
        }),
        Suite::TriPartial81 => json!({"levels": [2], "lattice_dims": [1], "trials": 1, "sizes": [2], "search": fast}),
        Suite::TriPartial82 => json!({"levels": [2], "lattice_dims": [1], "trials": 1, "depths": four, "search": fast}),
        Suite::Decoupling32 => json!({"levels": [2, 3], "exponents": [[1.5]], "depths": [[0, 0], [1, 1]], "trials": 10}),
        Suite::Stopping51 => json!({"levels": [4], "trials": 20}),
        Suite::KeyEstimate => json!({"levels": [2, 3], "trials": 5}),
        Suite::KhintchineMaurey => json!({"lattice_dims": [1, 2, 3], "trials": 30}),
        Suite::FeffermanStein => json!({"levels": [2, 2], "exponents": [[2, 3, 1.5]], "trials": 10}),
    };
    v["suite"] = json!(suite.name());
    v["seed"] = json!(seed);
    v
}

pub fn config(v: &Value) -> SuiteConfig {
    SuiteConfig::from_json(&v.to_string()).expect("test config parses")
}

pub fn resolved(v: &Value) -> Resolved {
    let c = config(v);
    let suite = c.suite(None).expect("suite named");
    c.resolve(suite).expect("test config is valid")
}

pub fn small(suite: Suite, seed: u64) -> Resolved {
    resolved(&small_json(suite, seed))
}
