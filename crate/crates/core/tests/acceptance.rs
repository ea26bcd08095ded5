//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Built with `harness = false`; `cargo test --test acceptance` prints the
//! table and exits non-zero if any criterion fails.

use std::f64::consts::FRAC_1_SQRT_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use nonlocal::harness::{
    check_sequential_chains, chsh_rho_frontier, common_randomness_argument,
    fuzz_hc_wiring_inequality, fuzz_mc_ribbon_monotonicity, fuzz_rho_monotonicity,
    fuzz_structure_lemmas, random_binary_box, random_box, FuzzReport,
};
use nonlocal::hc_ribbon::{hc_membership_channel, HcOptions, HcStatus};
use nonlocal::maxcorr::{joint_with_inputs, rho, rho_binary_closed_form, rho_box};
use nonlocal::mc_ribbon::{
    mc_inf_ratio, mc_membership, perturbation_second_order, standardize, RibbonPoint, PSD_TOLERANCE,
};
use nonlocal::nsbox::NoSignalingBox;
use nonlocal::prob::{JointDistribution, SupportFunction};
use nonlocal::seeds::{case_rng, random_simplex};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn random_joint(rng: &mut ChaCha8Rng, max_card: usize) -> JointDistribution {
    let a = rng.random_range(2..=max_card);
    let b = rng.random_range(2..=max_card);
    JointDistribution::new(a, b, random_simplex(rng, a * b)).expect("simplex point")
}

fn pt(l1: f64, l2: f64) -> RibbonPoint {
    RibbonPoint::new(l1, l2).expect("in range")
}

fn report_outcome(reports: &[FuzzReport]) -> Outcome {
    let checks: usize = reports.iter().map(|r| r.checks()).sum();
    let cases: usize = reports.iter().map(|r| r.cases_run).sum();
    let worst = reports
        .iter()
        .map(|r| r.worst_margin)
        .fold(f64::INFINITY, f64::min);
    let failures: Vec<_> = reports.iter().flat_map(|r| r.failures.iter()).collect();
    let summary = format!("{cases} cases, {checks} checks, worst margin {worst:.3e}");
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!(
            "{summary}, {} failures, first {:?}",
            failures.len(),
            failures[0]
        ))
    }
}

fn isotropic_measures() -> Outcome {
    let mut etas: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    etas.push(FRAC_1_SQRT_2);
    let mut worst_rho: f64 = 0.0;
    let mut worst_chsh: f64 = 0.0;
    for &eta in &etas {
        let b = NoSignalingBox::isotropic(eta).map_err(|e| e.to_string())?;
        worst_rho = worst_rho.max((rho_box(&b).rho - eta).abs());
        worst_chsh =
            worst_chsh.max((b.chsh_value().map_err(|e| e.to_string())? - (1.0 + eta) / 2.0).abs());
    }
    let msg =
        format!("max |rho - eta| = {worst_rho:.1e}, max |CHSH - (1+eta)/2| = {worst_chsh:.1e}");
    if worst_rho <= 1e-9 && worst_chsh <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn binary_closed_form() -> Outcome {
    let mut rng = case_rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let d = JointDistribution::new(2, 2, random_simplex(&mut rng, 4)).unwrap();
        let closed = rho_binary_closed_form(&d).map_err(|e| e.to_string())?;
        worst = worst.max((closed - rho(&d).rho).abs());
    }
    let msg = format!("10000 distributions, max difference {worst:.1e}");
    if worst <= 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn tensorization() -> Outcome {
    let mut rng = case_rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = random_joint(&mut rng, 4);
        let q = random_joint(&mut rng, 4);
        let joint = rho(&p.tensor(&q).unwrap()).rho;
        worst = worst.max((joint - rho(&p).rho.max(rho(&q).rho)).abs());
    }
    let msg = format!("1000 pairs, max difference {worst:.1e}");
    if worst <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn mc_ribbon_structure() -> Outcome {
    let mut rng = case_rng(4);
    let corner = pt(1.0, 1.0);
    for _ in 0..100 {
        let (a, b) = (rng.random_range(2..=4), rng.random_range(2..=4));
        let pa = random_simplex(&mut rng, a);
        let pb = random_simplex(&mut rng, b);
        let v = mc_membership(&JointDistribution::product(&pa, &pb).unwrap(), corner);
        if !v.inside {
            return Err(format!(
                "product distribution outside at (1,1): {}",
                v.min_eigenvalue
            ));
        }
    }
    let triangle: Vec<RibbonPoint> = RibbonPoint::grid(11)
        .into_iter()
        .filter(|p| p.lambda1 + p.lambda2 <= 1.0 + 1e-12)
        .collect();
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..100 {
        let d = random_joint(&mut rng, 4);
        for &p in &triangle {
            let v = mc_membership(&d, p);
            if !v.inside {
                return Err(format!(
                    "triangle point {p:?} rejected with {}",
                    v.min_eigenvalue
                ));
            }
        }
        let r = rho(&d).rho;
        worst_ratio = worst_ratio.max((mc_inf_ratio(&d, 10_000).estimate - r * r).abs());
    }
    let msg = format!(
        "products inside at (1,1); triangle inside; max |inf ratio - rho^2| = {worst_ratio:.1e}"
    );
    if worst_ratio <= 1e-3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn hc_ribbon_pr1() -> Outcome {
    let b = NoSignalingBox::isotropic(1.0).unwrap();
    let opts = HcOptions::default();
    let mut rng = case_rng(5);
    let mut inside_pts = Vec::new();
    while inside_pts.len() < 50 {
        let (l1, l2): (f64, f64) = (rng.random(), rng.random());
        if l1 + l2 <= 1.0 - 1e-3 {
            inside_pts.push(pt(l1, l2));
        }
    }
    let mut outside_pts = Vec::new();
    while outside_pts.len() < 50 {
        let (l1, l2): (f64, f64) = (rng.random(), rng.random());
        if l1 + l2 >= 1.0 + 1e-2 {
            outside_pts.push(pt(l1, l2));
        }
    }
    for (x, y) in b.input_pairs() {
        let d = b.conditional_joint(x, y).unwrap();
        for &p in &inside_pts {
            if hc_membership_channel(&d, p, &opts).status != HcStatus::InsideHeuristic {
                return Err(format!(
                    "input ({x},{y}), {p:?} refuted inside the triangle"
                ));
            }
        }
        for &p in &outside_pts {
            if hc_membership_channel(&d, p, &opts).status != HcStatus::OutsideCertified {
                return Err(format!("input ({x},{y}), {p:?} not certified outside"));
            }
        }
    }
    Ok("4 inputs x (50 inside + 50 certified outside), 64 restarts".into())
}

fn hc_inside_mc() -> Outcome {
    let mut rng = case_rng(6);
    let opts = HcOptions::default();
    let (mut found, mut tried) = (0, 0);
    let mut worst = f64::INFINITY;
    while found < 200 {
        tried += 1;
        let d = random_joint(&mut rng, 3);
        let p = pt(rng.random(), rng.random());
        if hc_membership_channel(&d, p, &opts).status != HcStatus::InsideHeuristic {
            continue;
        }
        found += 1;
        let m = mc_membership(&d, p).min_eigenvalue;
        worst = worst.min(m);
    }
    let msg = format!("{found} inside queries of {tried}, worst MC margin {worst:.3e}");
    if worst >= -PSD_TOLERANCE {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn structure_lemmas() -> Outcome {
    report_outcome(&[fuzz_structure_lemmas(3, 300, 7).map_err(|e| e.to_string())?])
}

fn rho_monotonicity() -> Outcome {
    let two = fuzz_rho_monotonicity(2, 500, 8).map_err(|e| e.to_string())?;
    let three = fuzz_rho_monotonicity(3, 200, 80).map_err(|e| e.to_string())?;
    let chains = check_sequential_chains(4, 100, 800).map_err(|e| e.to_string())?;
    report_outcome(&[two, three, chains])
}

fn mc_monotonicity() -> Outcome {
    let grid = RibbonPoint::grid(5);
    report_outcome(&[fuzz_mc_ribbon_monotonicity(2, 200, &grid, 9).map_err(|e| e.to_string())?])
}

fn hc_wiring_inequality() -> Outcome {
    report_outcome(&[fuzz_hc_wiring_inequality(2, 50, 100, 10).map_err(|e| e.to_string())?])
}

fn frontier_and_mixtures() -> Outcome {
    let mut reports = Vec::new();
    for (k, eta) in [FRAC_1_SQRT_2, 0.75, 0.85, 0.95].into_iter().enumerate() {
        reports.push(chsh_rho_frontier(eta, 1000, 11 + k as u64).map_err(|e| e.to_string())?);
    }
    let frontier = report_outcome(&reports)?;
    let mut rng = case_rng(110);
    let pr1 = NoSignalingBox::isotropic(1.0).unwrap();
    for case in 0..100 {
        let eta2 = rng.random_range(FRAC_1_SQRT_2..=1.0);
        let threshold = (1.0 + eta2) / 2.0;
        // Local components have CHSH <= 3/4 < threshold, so only PR_1 can
        // carry the argument.
        let locals: Vec<NoSignalingBox> = (0..3)
            .map(|_| {
                let fa = [rng.random_range(0..2), rng.random_range(0..2)];
                let fb = [rng.random_range(0..2), rng.random_range(0..2)];
                NoSignalingBox::deterministic(&fa, &fb, 2, 2).unwrap()
            })
            .collect();
        let chsh_locals: Vec<f64> = locals.iter().map(|b| b.chsh_value().unwrap()).collect();
        let w_pr = rng.random_range(0.0..1.0);
        let rest = random_simplex(&mut rng, 3);
        let mut mixture = vec![(w_pr, pr1.clone())];
        mixture.extend(
            rest.iter()
                .zip(&locals)
                .map(|(&w, b)| ((1.0 - w_pr) * w, b.clone())),
        );
        let expected_chsh = w_pr
            + (1.0 - w_pr)
                * rest
                    .iter()
                    .zip(&chsh_locals)
                    .map(|(w, c)| w * c)
                    .sum::<f64>();
        let v = common_randomness_argument(eta2, &mixture).map_err(|e| e.to_string())?;
        let expected_met = expected_chsh >= threshold;
        if (expected_chsh - threshold).abs() < 1e-12 {
            continue;
        }
        let correct = v.hypothesis_met == expected_met
            && v.consistent()
            && (!expected_met || (v.component == Some(0) && v.frontier_holds == Some(true)));
        if !correct {
            return Err(format!("mixture {case}: wrong verdict {v:?}"));
        }
    }
    Ok(format!("{frontier}; 100 mixture verdicts correct"))
}

fn lemma6_bound() -> Outcome {
    let mut rng = case_rng(12);
    let (mut worst_upper, mut worst_lower) = (f64::INFINITY, f64::INFINITY);
    for k in 0..1000 {
        let b = if k % 2 == 0 {
            random_binary_box(&mut rng)
        } else {
            let c: Vec<usize> = (0..4).map(|_| rng.random_range(2..=3)).collect();
            random_box(&mut rng, c[0], c[1], c[2], c[3], 3).unwrap()
        };
        let q = JointDistribution::new(
            b.x_card(),
            b.y_card(),
            random_simplex(&mut rng, b.x_card() * b.y_card()),
        )
        .unwrap();
        let full = rho(&joint_with_inputs(&b, &q).unwrap()).rho;
        let outputs = JointDistribution::from_fn(b.a_card(), b.b_card(), |a, bb| {
            b.input_pairs()
                .map(|(x, y)| q.get(x, y) * b.get(x, y, a, bb))
                .sum()
        })
        .unwrap();
        worst_upper = worst_upper.min(rho(&q).rho.max(rho_box(&b).rho) - full);
        worst_lower = worst_lower.min(full - rho(&outputs).rho);
    }
    let msg = format!(
        "1000 pairs, worst margins {worst_upper:.3e} (upper) and {worst_lower:.3e} (outputs)"
    );
    if worst_upper >= -1e-9 && worst_lower >= -1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn perturbation() -> Outcome {
    let mut rng = case_rng(13);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = random_joint(&mut rng, 3);
        let values: Vec<f64> = (0..d.a_card() * d.b_card())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let raw =
            SupportFunction::new(d.a_card(), d.b_card(), values).map_err(|e| e.to_string())?;
        let f = standardize(&d, &raw).map_err(|e| e.to_string())?;
        let check = perturbation_second_order(&d, &f, pt(rng.random(), rng.random()))
            .map_err(|e| e.to_string())?;
        worst = worst.max((check.finite_difference - check.quadratic_form).abs());
    }
    let msg = format!("100 triples, max |finite difference - D| = {worst:.1e}");
    if worst <= 1e-4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [Criterion; 13] = [
        (
            "isotropic measures",
            Duration::from_secs(1),
            isotropic_measures,
        ),
        (
            "binary closed form",
            Duration::from_secs(10),
            binary_closed_form,
        ),
        (
            "tensorization of rho",
            Duration::from_secs(30),
            tensorization,
        ),
        (
            "MC ribbon structure",
            Duration::from_secs(120),
            mc_ribbon_structure,
        ),
        ("HC ribbon of PR_1", Duration::from_secs(120), hc_ribbon_pr1),
        ("HC inside implies MC inside", Duration::MAX, hc_inside_mc),
        (
            "wiring information identities",
            Duration::from_secs(300),
            structure_lemmas,
        ),
        (
            "rho monotonicity under wirings",
            Duration::from_secs(600),
            rho_monotonicity,
        ),
        (
            "MC ribbon monotonicity under wirings",
            Duration::MAX,
            mc_monotonicity,
        ),
        ("HC wiring inequality", Duration::MAX, hc_wiring_inequality),
        (
            "CHSH to rho frontier and mixtures",
            Duration::MAX,
            frontier_and_mixtures,
        ),
        ("rho with inputs bound", Duration::MAX, lemma6_bound),
        ("second-order perturbation", Duration::MAX, perturbation),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > *budget => Err(format!("{msg}; over the {budget:?} budget")),
            other => other,
        };
        let (tag, msg) = match &outcome {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!(
            "criterion {:>2} {tag} {name}: {msg} [{:.2}s]",
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 13 criteria passed");
}
