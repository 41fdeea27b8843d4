//! Epidemic threshold verdicts.

use serde::{Deserialize, Serialize};

use super::AllocationError;
use crate::graph::{lambda_max, Graph};
use crate::meanfield::RateModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    StableDiseaseFree,
    Endemic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCheck {
    pub verdict: Verdict,
    /// `1/λmax(A) − β/δ` for homogeneous rates on a graph with at least one
    /// cycle, `−λmax(B − D)` otherwise. Nonnegative means disease-free.
    pub margin: f64,
    /// `λmax(B − D)`.
    pub lambda_max: f64,
    /// The verdict is an "if and only if" only for strongly connected graphs;
    /// otherwise it is the sufficient direction alone.
    pub strongly_connected: bool,
}

/// Margins within this relative distance of zero count as the threshold
/// itself, which is disease-free.
const BOUNDARY_TOL: f64 = 1e-10;

pub fn check_threshold(g: &Graph, rates: &RateModel) -> Result<ThresholdCheck, AllocationError> {
    let m = rates.metzler();
    let lam = lambda_max(&m)?.lambda_max;
    let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    let mut margin = -lam;
    let mut boundary = lam.abs() <= BOUNDARY_TOL * scale;
    if let Some((beta, delta)) = rates.homogeneous_rates() {
        let la = lambda_max(&g.adjacency())?.lambda_max;
        if la > 0.0 {
            let tau = beta / delta;
            margin = 1.0 / la - tau;
            boundary = margin.abs() <= BOUNDARY_TOL * (1.0 / la).max(tau);
        }
    }
    let verdict = if margin >= 0.0 || boundary {
        Verdict::StableDiseaseFree
    } else {
        Verdict::Endemic
    };
    Ok(ThresholdCheck {
        verdict,
        margin,
        lambda_max: lam,
        strongly_connected: g.is_strongly_connected(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphKind;

    #[test]
    fn complete_five_below_threshold() {
        let g = Graph::generate(&GraphKind::Complete, 5).unwrap();
        let r = RateModel::homogeneous(&g, 0.2, 1.0).unwrap();
        let c = check_threshold(&g, &r).unwrap();
        assert_eq!(c.verdict, Verdict::StableDiseaseFree);
        assert!((c.margin - 0.05).abs() < 1e-9);
    }

    #[test]
    fn exactly_at_threshold_is_stable() {
        let g = Graph::generate(&GraphKind::Complete, 5).unwrap();
        let r = RateModel::homogeneous(&g, 0.25, 1.0).unwrap();
        assert_eq!(
            check_threshold(&g, &r).unwrap().verdict,
            Verdict::StableDiseaseFree
        );
        let r = RateModel::homogeneous(&g, 0.26, 1.0).unwrap();
        assert_eq!(check_threshold(&g, &r).unwrap().verdict, Verdict::Endemic);
    }

    #[test]
    fn no_infection_is_stable_with_margin_min_delta() {
        let g = Graph::generate(&GraphKind::Path, 4).unwrap();
        let r = RateModel::node_infection(&g, &[0.0; 4], &[0.7, 0.3, 0.9, 1.0]).unwrap();
        let c = check_threshold(&g, &r).unwrap();
        assert_eq!(c.verdict, Verdict::StableDiseaseFree);
        assert!((c.margin - 0.3).abs() < 1e-10);
    }
}
