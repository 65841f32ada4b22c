//! Restricted-isometry benchmark over the measurement-operator zoo.
//!
//! Probes four dense ensembles and the two counter-grid operators with
//! the same sparse-vector protocol, so their distances are directly
//! comparable in one table.

use flore_core::linsys::{
    make_cs_matrix, rip_distance, DenseEnsembleSpec, EnsembleKind, LinearOp, SketchOperator,
};
use flore_core::sketch::CountSketch;
use flore_core::stream::{key_from_id, KeyIndex};

use crate::config::RipSection;
use crate::report::RipRow;
use crate::{CliError, CliResult};

const DENSE_KINDS: [(EnsembleKind, &str); 4] = [
    (EnsembleKind::Bernoulli, "bernoulli"),
    (EnsembleKind::Gaussian, "gaussian"),
    (EnsembleKind::Fourier, "fourier"),
    (EnsembleKind::Incoherence, "incoherence"),
];

/// Key universe `{0, …, n-1}` rendered as fixed-width keys, the same
/// enumeration the recovery pipeline uses for synthetic traces.
fn enumerated_index(n: usize) -> KeyIndex {
    let mut index = KeyIndex::new();
    for i in 0..n {
        index.insert(&key_from_id(i as u64, 8));
    }
    index
}

/// Measures every operator kind in the benchmark section.
pub fn run(section: &RipSection) -> CliResult<Vec<RipRow>> {
    if section.grid_rows == 0 || section.m % section.grid_rows != 0 {
        return Err(CliError::config(format!(
            "rip grid_rows {} must divide m {}",
            section.grid_rows, section.m
        )));
    }
    let width = section.m / section.grid_rows;
    let index = enumerated_index(section.n);
    let mut rows = Vec::with_capacity(DENSE_KINDS.len() + 2);

    for (kind, label) in DENSE_KINDS {
        let spec = DenseEnsembleSpec::new(kind, section.m, section.n, section.matrix_seed);
        let matrix = make_cs_matrix(&spec).map_err(CliError::from)?;
        let distance =
            rip_distance(&matrix, section.s, section.trials, section.probe_seed)
                .map_err(CliError::from)?;
        rows.push(RipRow {
            kind: label.to_string(),
            m: section.m,
            n: section.n,
            s: section.s,
            trials: section.trials,
            build_seed: section.matrix_seed,
            probe_seed: section.probe_seed,
            distance,
        });
    }

    let cm_op = SketchOperator::count_min(section.grid_rows, width, section.sketch_seed, &index)
        .map_err(CliError::from)?;
    rows.push(grid_row("count-min", &cm_op, section)?);

    let cs = CountSketch::new(section.grid_rows, width, section.sketch_seed)
        .map_err(CliError::from)?;
    let cs_op = SketchOperator::for_count_sketch(&cs, &index).map_err(CliError::from)?;
    rows.push(grid_row("count-sketch", &cs_op, section)?);

    Ok(rows)
}

fn grid_row(label: &str, op: &dyn LinearOp, section: &RipSection) -> CliResult<RipRow> {
    let distance =
        rip_distance(op, section.s, section.trials, section.probe_seed).map_err(CliError::from)?;
    Ok(RipRow {
        kind: label.to_string(),
        m: section.m,
        n: section.n,
        s: section.s,
        trials: section.trials,
        build_seed: section.sketch_seed,
        probe_seed: section.probe_seed,
        distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn small_section() -> RipSection {
        RipSection {
            m: 16,
            n: 32,
            s: 4,
            trials: 40,
            grid_rows: 4,
            matrix_seed: 21,
            sketch_seed: 17,
            probe_seed: 35,
        }
    }

    #[test]
    fn emits_one_row_per_operator_kind() {
        let rows = run(&small_section()).unwrap();
        let kinds: Vec<&str> = rows.iter().map(|r| r.kind.as_str()).collect();
        assert_eq!(
            kinds,
            [
                "bernoulli",
                "gaussian",
                "fourier",
                "incoherence",
                "count-min",
                "count-sketch"
            ]
        );
        assert!(rows.iter().all(|r| r.distance.is_finite() && r.distance >= 0.0));
    }

    #[test]
    fn identical_sections_reproduce_identical_distances() {
        let a = run(&small_section()).unwrap();
        let b = run(&small_section()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.distance.to_bits(), y.distance.to_bits(), "{}", x.kind);
        }
    }

    #[test]
    fn identity_operator_has_zero_distance() {
        let eye = DMatrix::<f64>::identity(24, 24);
        let d = rip_distance(&eye, 4, 100, 7).unwrap();
        assert_eq!(d, 0.0, "an orthonormal map preserves every norm exactly");
    }

    #[test]
    fn indivisible_grid_rows_is_a_config_error() {
        let mut section = small_section();
        section.grid_rows = 5;
        let err = run(&section).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
