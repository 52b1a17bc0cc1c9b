use std::path::PathBuf;

use serde::Serialize;

use super::config::ExperimentSpec;
use super::io;
use crate::error::{LabError, Result};
use crate::experiments::{self as ex, Check, Outcome, Params};

type Runner = fn(&Params) -> Result<Outcome>;

/// A named, runnable experiment.
pub struct Experiment {
    pub name: &'static str,
    pub criterion: u32,
    pub summary: &'static str,
    pub runner: Runner,
}

static REGISTRY: [Experiment; 11] = [
    Experiment {
        name: "heteroclinic-constants",
        criterion: 1,
        summary: "profile residual, energy h0 and tail constant A0 against closed forms",
        runner: ex::heteroclinic_constants,
    },
    Experiment {
        name: "interaction-asymptotics",
        criterion: 2,
        summary: "two-kink interaction integral against its exponential asymptotics",
        runner: ex::interaction_asymptotics,
    },
    Experiment {
        name: "corrector-identities",
        criterion: 3,
        summary: "corrector ODE residual, weighted cubic identity and odd parity",
        runner: ex::corrector_identities,
    },
    Experiment {
        name: "pde-critical-points",
        criterion: 4,
        summary: "Newton-converged layered solution on a flat torus; energy, mass, index and kernel",
        runner: ex::pde_critical_points,
    },
    Experiment {
        name: "separation-law",
        criterion: 5,
        summary: "layer separation against the logarithmic Toda law as epsilon shrinks",
        runner: ex::separation_law,
    },
    Experiment {
        name: "jacobi-extraction",
        criterion: 6,
        summary: "rescaled layer gaps converge to a positive Jacobi field",
        runner: ex::jacobi_extraction,
    },
    Experiment {
        name: "index-comparison",
        criterion: 7,
        summary: "PDE Morse index matches the surface index on three warped families",
        runner: ex::index_comparison,
    },
    Experiment {
        name: "stability-inequality",
        criterion: 8,
        summary: "weighted stability inequality with a calibrated constant on random bumps",
        runner: ex::stability_inequality,
    },
    Experiment {
        name: "geometry-kernel",
        criterion: 9,
        summary: "first variation, Riccati evolution and circle area on random graphs",
        runner: ex::geometry_kernel,
    },
    Experiment {
        name: "barrier-fixed-point",
        criterion: 10,
        summary: "barrier fixed point: contraction, Lipschitz dependence and residuals",
        runner: ex::barrier_fixed_point,
    },
    Experiment {
        name: "enhanced-curvature",
        criterion: 11,
        summary: "enhanced second fundamental form stays bounded on stable families",
        runner: ex::enhanced_curvature,
    },
];

pub fn registry() -> &'static [Experiment] {
    &REGISTRY
}

pub fn find(name: &str) -> Result<&'static Experiment> {
    REGISTRY.iter().find(|e| e.name == name).ok_or_else(|| {
        let names: Vec<_> = REGISTRY.iter().map(|e| e.name).collect();
        LabError::Config(format!("unknown experiment `{name}`; available: {}", names.join(", ")))
    })
}

/// Summary of one run together with the files it wrote.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub criterion: u32,
    pub pass: bool,
    pub params: Params,
    pub checks: Vec<Check>,
    pub elapsed_s: f64,
    pub artifacts: Vec<PathBuf>,
}

/// Runs the experiment and writes `report.json`, one CSV per table and one checkpoint per field.
pub fn run(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate()?;
    let exp = find(&spec.name)?;
    let out = (exp.runner)(&spec.params)?;
    std::fs::create_dir_all(&spec.out)?;
    let mut artifacts = vec![];
    for t in &out.tables {
        let p = spec.out.join(format!("{}.csv", t.name));
        io::write_table_file(t, &p)?;
        artifacts.push(p);
    }
    for (name, f) in &out.fields {
        let p = spec.out.join(format!("{name}.bin"));
        io::write_field(f, &p)?;
        artifacts.push(p);
    }
    let report_path = spec.out.join("report.json");
    artifacts.push(report_path.clone());
    let report = RunReport {
        experiment: exp.name.to_string(),
        criterion: exp.criterion,
        pass: out.pass,
        params: spec.params.clone(),
        checks: out.checks,
        elapsed_s: out.elapsed_s,
        artifacts,
    };
    io::write_json(&report, &report_path)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_unique_and_criteria_cover_all() {
        let mut c: Vec<u32> = registry().iter().map(|e| e.criterion).collect();
        c.sort();
        assert_eq!(c, (1..=11).collect::<Vec<_>>());
        for e in registry() {
            assert!(std::ptr::eq(find(e.name).unwrap(), e));
        }
        assert!(matches!(find("missing"), Err(LabError::Config(_))));
    }
}
