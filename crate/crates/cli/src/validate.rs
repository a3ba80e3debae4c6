//! The exact-enumeration check suite behind `srp validate`.

use srp_core::oracle::{
    check_domain_markov, check_kernel, check_translation_lemmas, double_dimer_projection, geometric_bound,
    tail_bound_violation, ExactEnsemble, KernelOptions,
};
use srp_core::{JumpEnergy, LatticeKind, LatticeSpec, SiteIndex};

use crate::error::Result;

pub const KERNEL_TOLERANCE: f64 = 1e-12;
pub const IDENTITY_TOLERANCE: f64 = 1e-13;

/// Acceptance exponent factor used by `--corrupt-acceptance`.
pub const CORRUPT_ACCEPTANCE_SCALE: f64 = 1.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} ({})", self.name, self.detail)
    }
}

fn torus(l0: usize, l1: usize) -> Result<LatticeSpec> {
    Ok(LatticeSpec::rectangular(LatticeKind::Square, l0, l1)?)
}

fn ensemble(l0: usize, l1: usize, alpha: f64) -> Result<ExactEnsemble> {
    Ok(ExactEnsemble::enumerate(&torus(l0, l1)?, alpha, &JumpEnergy::Quadratic)?)
}

fn kernel_checks(acceptance_scale: f64, checks: &mut Vec<Check>) -> Result<()> {
    let options = KernelOptions { acceptance_scale, ..KernelOptions::default() };
    for alpha in [0.0, 0.5, 1.0, 2.0] {
        let r = check_kernel(&ensemble(2, 2, alpha)?, options)?;
        let worst = r.row_sum_error.max(r.detailed_balance_error).max(r.sweep_stationarity_error);
        checks.push(Check::new(
            format!("kernel 2x2 alpha={alpha}"),
            worst <= KERNEL_TOLERANCE && r.irreducible,
            format!(
                "row sums {:.1e}, detailed balance {:.1e}, sweep stationarity {:.1e}, irreducible {}",
                r.row_sum_error, r.detailed_balance_error, r.sweep_stationarity_error, r.irreducible
            ),
        ));
    }
    Ok(())
}

/// Runs every check. `acceptance_scale` other than 1 builds the kernels
/// from a deliberately wrong acceptance rule.
pub fn run_suite(acceptance_scale: f64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    kernel_checks(acceptance_scale, &mut checks)?;

    for (l0, l1) in [(2, 2), (2, 3), (3, 3)] {
        let r = check_translation_lemmas(&ensemble(l0, l1, 1.0)?, 3, &[0.5, 1.0, 1.5, 2.0]);
        checks.push(Check::new(
            format!("translation lemmas {l0}x{l1}"),
            r.max() <= IDENTITY_TOLERANCE,
            format!("orbit jumps {:.1e}, long jumps {:.1e}", r.orbit_jump_discrepancy, r.long_jump_discrepancy),
        ));
    }

    let bound = geometric_bound(LatticeKind::Square, 2.0, 9)?;
    for (l0, l1) in [(2, 2), (2, 3), (3, 3)] {
        let v = tail_bound_violation(&ensemble(l0, l1, 2.0)?, &bound, SiteIndex(0));
        checks.push(Check::new(
            format!("geometric tail bound {l0}x{l1} alpha=2"),
            v.is_some_and(|v| v <= 0.0),
            format!("s = {:.7}, max excess {:?}", bound.s, v),
        ));
    }

    let lattice = torus(3, 3)?;
    for alpha in [0.5, 1.0] {
        let r = check_domain_markov(&lattice, &[0, 1, 2, 3, 6], 0, alpha, &JumpEnergy::Quadratic, 2)?;
        checks.push(Check::new(
            format!("domain Markov 3x3 alpha={alpha}"),
            r.max_discrepancy <= IDENTITY_TOLERANCE && r.prefixes > 1,
            format!("{} prefixes, max discrepancy {:.1e}", r.prefixes, r.max_discrepancy),
        ));
    }

    for (kind, l0, l1) in [
        (LatticeKind::Square, 2, 2),
        (LatticeKind::Square, 2, 3),
        (LatticeKind::Square, 2, 4),
        (LatticeKind::Triangular, 2, 2),
    ] {
        let r = double_dimer_projection(&LatticeSpec::rectangular(kind, l0, l1)?)?;
        checks.push(Check::new(
            format!("double dimer multiplicity {kind} {l0}x{l1}"),
            r.mismatches == 0 && r.configurations > 0,
            format!("{} configurations, {} mismatches", r.configurations, r.mismatches),
        ));
    }

    let zs: Vec<f64> = [0.0, 0.25, 0.5, 1.0, 2.0]
        .iter()
        .map(|&a| ensemble(2, 3, a).map(|e| e.partition_function()))
        .collect::<Result<_>>()?;
    checks.push(Check::new(
        "partition function decreasing in alpha 2x3",
        zs.windows(2).all(|w| w[1] < w[0]),
        format!("Z(0) = {}, Z(2) = {:.6}", zs[0], zs[4]),
    ));

    let refused = matches!(
        ExactEnsemble::enumerate(&torus(2, 5)?, 1.0, &JumpEnergy::Quadratic),
        Err(srp_core::Error::Budget(_))
    );
    checks.push(Check::new("enumeration refuses N > 9", refused, "2x5 torus"));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_suite_passes() {
        let checks = run_suite(1.0).unwrap();
        for c in &checks {
            assert!(c.passed, "{c}");
        }
        assert!(checks.len() >= 15);
    }

    #[test]
    fn corrupted_acceptance_fails_detailed_balance() {
        let checks = run_suite(CORRUPT_ACCEPTANCE_SCALE).unwrap();
        let failed: Vec<&Check> = checks.iter().filter(|c| !c.passed).collect();
        assert!(!failed.is_empty());
        assert!(failed.iter().all(|c| c.name.starts_with("kernel")));
        // At alpha = 0 the acceptance rule does not depend on the exponent.
        assert!(checks.iter().find(|c| c.name == "kernel 2x2 alpha=0").unwrap().passed);
    }
}
