//! Verification campaigns: randomized monotonicity checks over wirings,
//! isotropic-box scans and the CHSH to maximal-correlation frontier.
//!
//! Every campaign derives one seed per case from its campaign seed, runs the
//! cases in parallel and collects them in case order, so reports are
//! identical across runs and thread counts.

mod campaigns;

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nsbox::{NoSignalingBox, NS_TOLERANCE};
use crate::report::{format_sig, sig_number, to_csv};
use crate::seeds::random_simplex;

pub use campaigns::{
    check_hc_wiring_inequality, check_sequential_chains, chsh_rho_frontier,
    common_randomness_argument, fuzz_hc_wiring_inequality, fuzz_mc_ribbon_monotonicity,
    fuzz_rho_monotonicity, fuzz_structure_lemmas, isotropic_scan, random_frontier_params,
    CommonRandomnessVerdict, IsotropicRow, HC_INEQUALITY_TOLERANCE, LEMMA_TOLERANCE, MC_BAND,
    RHO_TOLERANCE,
};

/// One checked inequality `lhs <= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub case_id: usize,
    pub seed: u64,
    pub quantity: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub case_id: usize,
    pub seed: u64,
    pub description: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub campaign: String,
    /// Everything needed to rerun the campaign.
    pub config: serde_json::Value,
    pub tolerance: f64,
    pub cases_run: usize,
    /// Smallest margin seen; `+inf` when nothing was checked.
    pub worst_margin: f64,
    pub failures: Vec<Failure>,
    #[serde(skip)]
    pub rows: Vec<ReportRow>,
}

impl FuzzReport {
    pub fn new(campaign: &str, config: serde_json::Value, tolerance: f64) -> Self {
        FuzzReport {
            campaign: campaign.into(),
            config,
            tolerance,
            cases_run: 0,
            worst_margin: f64::INFINITY,
            failures: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Records `lhs <= rhs` within the report tolerance.
    pub fn check(
        &mut self,
        case_id: usize,
        seed: u64,
        quantity: impl Into<String>,
        lhs: f64,
        rhs: f64,
    ) {
        let quantity = quantity.into();
        let margin = rhs - lhs;
        let pass = margin >= -self.tolerance;
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
        }
        if !pass {
            self.failures.push(Failure {
                case_id,
                seed,
                description: quantity.clone(),
                lhs,
                rhs,
            });
        }
        self.rows.push(ReportRow {
            case_id,
            seed,
            quantity,
            lhs,
            rhs,
            margin,
            pass,
        });
    }

    /// Appends the rows of `other`, whose case ids are already global.
    pub fn absorb(&mut self, other: FuzzReport) {
        for r in other.rows {
            self.check(r.case_id, r.seed, r.quantity, r.lhs, r.rhs);
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn checks(&self) -> usize {
        self.rows.len()
    }

    pub fn to_csv(&self) -> String {
        let records = self.rows.iter().map(|r| {
            vec![
                r.case_id.to_string(),
                r.seed.to_string(),
                r.quantity.clone(),
                format_sig(r.lhs),
                format_sig(r.rhs),
                format_sig(r.margin),
                r.pass.to_string(),
            ]
        });
        to_csv(
            &[
                "case_id", "seed", "quantity", "lhs", "rhs", "margin", "pass",
            ],
            records,
        )
        .expect("in-memory csv")
    }

    pub fn summary_json(&self) -> String {
        let v = serde_json::json!({
            "campaign": self.campaign,
            "config": self.config,
            "tolerance": sig_number(self.tolerance),
            "cases_run": self.cases_run,
            "checks": self.rows.len(),
            "worst_margin": sig_number(self.worst_margin),
            "passed": self.passed(),
            "failures": self.failures.iter().map(|f| serde_json::json!({
                "case_id": f.case_id,
                "seed": f.seed,
                "description": f.description,
                "lhs": sig_number(f.lhs),
                "rhs": sig_number(f.rhs),
            })).collect::<Vec<_>>(),
        });
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.json`; returns both paths.
    pub fn write(&self, stem: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let stem = stem.as_ref();
        let csv = stem.with_extension("csv");
        let json = stem.with_extension("json");
        std::fs::write(&csv, self.to_csv())?;
        std::fs::write(&json, self.summary_json() + "\n")?;
        Ok((csv, json))
    }
}

/// A random point of the no-signaling polytope: a Dirichlet(1) mixture of
/// `locals` random local deterministic boxes and, when `a_card == b_card`,
/// one PR-type box `b - a = ((x + s) mod |X|) ((y + t) mod |Y|) + c (mod d)`
/// with random shifts `s`, `t`, `c`.
pub fn random_box<R: Rng + ?Sized>(
    rng: &mut R,
    x_card: usize,
    y_card: usize,
    a_card: usize,
    b_card: usize,
    locals: usize,
) -> Result<NoSignalingBox> {
    let mut vertices = Vec::with_capacity(locals + 1);
    for _ in 0..locals {
        let fa: Vec<usize> = (0..x_card).map(|_| rng.random_range(0..a_card)).collect();
        let fb: Vec<usize> = (0..y_card).map(|_| rng.random_range(0..b_card)).collect();
        vertices.push(NoSignalingBox::deterministic(&fa, &fb, a_card, b_card)?);
    }
    if a_card == b_card {
        let d = a_card;
        let (s, t, c) = (
            rng.random_range(0..x_card),
            rng.random_range(0..y_card),
            rng.random_range(0..d),
        );
        vertices.push(NoSignalingBox::from_fn(
            x_card,
            y_card,
            d,
            d,
            |x, y, a, b| {
                if (a + ((x + s) % x_card) * ((y + t) % y_card) + c) % d == b {
                    1.0 / d as f64
                } else {
                    0.0
                }
            },
        )?);
    }
    let weights = random_simplex(rng, vertices.len());
    NoSignalingBox::mix(&vertices, &weights)
}

/// Binary [`random_box`] with three local vertices.
pub fn random_binary_box<R: Rng + ?Sized>(rng: &mut R) -> NoSignalingBox {
    random_box(rng, 2, 2, 2, 2, 3).expect("binary mixtures are valid")
}

/// Revalidates a box at the default tolerance; used on mixtures whose
/// rounding may drift.
pub fn revalidate(b: &NoSignalingBox) -> Result<NoSignalingBox> {
    Ok(NoSignalingBox::validate(
        b.x_card(),
        b.y_card(),
        b.a_card(),
        b.b_card(),
        b.table().to_vec(),
        NS_TOLERANCE,
    )?)
}
