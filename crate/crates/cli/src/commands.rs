use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use serde_json::{json, Value};

use nonlocal::harness::{
    check_sequential_chains, chsh_rho_frontier, common_randomness_argument,
    fuzz_hc_wiring_inequality, fuzz_mc_ribbon_monotonicity, fuzz_rho_monotonicity,
    fuzz_structure_lemmas, isotropic_scan, FuzzReport, IsotropicRow, LEMMA_TOLERANCE,
};
use nonlocal::hc_ribbon::{self, HcOptions};
use nonlocal::maxcorr::rho_box;
use nonlocal::mc_ribbon::{self, RibbonPoint, ScanRow};
use nonlocal::nsbox::NoSignalingBox;
use nonlocal::report::{format_sig, sig_number as sig, to_csv};
use nonlocal::wiring::{derived_box, verify_chain_rule_lemma, verify_structure_lemmas, WiringSpec};

use crate::config::{Format, Settings};
use crate::{Campaign, CliError, Command, Ribbon};

type Result<T> = std::result::Result<T, CliError>;

const DEFAULT_RIBBON_GRID: usize = 21;
const DEFAULT_FUZZ_GRID: usize = 5;
const DEFAULT_SCAN_GRID: usize = 11;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("cannot write {}: {e}", path.display()))
}

/// Writes `text` to `--out` if given, otherwise to stdout.
fn emit(settings: &Settings, text: &str) -> Result<()> {
    match &settings.out {
        Some(path) => std::fs::write(path, text).map_err(|e| io_err(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_box(path: &Path, settings: &Settings) -> Result<NoSignalingBox> {
    NoSignalingBox::load(path, settings.tolerance).map_err(|e| {
        let err = CliError::from(e);
        match err {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        }
    })
}

/// Box file text with probabilities rounded to 12 significant digits.
fn box_text(b: &NoSignalingBox) -> String {
    let mut file = b.to_file();
    let round = |x: f64| format_sig(x).parse::<f64>().unwrap_or(x);
    file.p
        .iter_mut()
        .flatten()
        .flatten()
        .flatten()
        .for_each(|v| *v = round(*v));
    serde_json::to_string_pretty(&file).expect("box files serialize") + "\n"
}

fn json_text(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize") + "\n"
}

pub fn run(command: Command, settings: &Settings) -> Result<()> {
    match command {
        Command::Validate { file } => validate(&file, settings),
        Command::Measures { file } => measures(&file, settings),
        Command::Ribbon { which, file } => ribbon(which, &file, settings),
        Command::Wire {
            spec,
            report,
            no_lemmas,
        } => wire(&spec, report.as_deref(), no_lemmas, settings),
        Command::Fuzz {
            campaign,
            boxes,
            cases,
            channels,
        } => fuzz(campaign, boxes, cases, channels, settings),
        Command::ScanIsotropic => scan_isotropic(settings),
        Command::Frontier { eta, samples } => {
            let report = chsh_rho_frontier(eta, samples, settings.seed)?;
            finish_report(&report, settings)
        }
        Command::Isotropic { eta } => emit(settings, &box_text(&NoSignalingBox::isotropic(eta)?)),
        Command::Pivot { eta2, terms } => pivot(eta2, &terms, settings),
    }
}

fn validate(file: &Path, settings: &Settings) -> Result<()> {
    let b = load_box(file, settings)?;
    let text = match settings.format {
        Format::Csv => format!(
            "file,valid,shape\n{},true,{}\n",
            file.display(),
            b.shape_string()
        ),
        Format::Json => json_text(
            &json!({"file": file.display().to_string(), "valid": true, "shape": b.shape_string()}),
        ),
    };
    emit(settings, &text)
}

fn measures(file: &Path, settings: &Settings) -> Result<()> {
    let b = load_box(file, settings)?;
    let r = rho_box(&b);
    let chsh = if b.is_binary() {
        Some(b.chsh_value()?)
    } else {
        None
    };
    let text = match settings.format {
        Format::Csv => to_csv(
            &["rho", "argmax_x", "argmax_y", "chsh"],
            [vec![
                format_sig(r.rho),
                r.argmax_input_pair.0.to_string(),
                r.argmax_input_pair.1.to_string(),
                chsh.map(format_sig).unwrap_or_default(),
            ]],
        )?,
        Format::Json => json_text(&json!({
            "rho": sig(r.rho),
            "argmax_input": [r.argmax_input_pair.0, r.argmax_input_pair.1],
            "chsh": chsh.map(sig),
        })),
    };
    emit(settings, &text)
}

fn ribbon(which: Ribbon, file: &Path, settings: &Settings) -> Result<()> {
    let b = load_box(file, settings)?;
    let k = settings.grid.unwrap_or(DEFAULT_RIBBON_GRID);
    let rows = match which {
        Ribbon::Mc => mc_ribbon::scan_box(&b, k),
        Ribbon::Hc => {
            let opts = HcOptions {
                restarts: settings.restarts,
                u_card: settings.u_card,
                tolerance: settings.hc_tolerance,
                seed: settings.seed,
                ..HcOptions::default()
            };
            hc_ribbon::scan_box(&b, k, &opts)
        }
    };
    let text = match settings.format {
        Format::Csv => ScanRow::to_csv(&rows),
        Format::Json => json_text(&Value::Array(
            rows.iter()
                .map(|r| {
                    let mut v = json!({
                        "lambda1": sig(r.lambda1),
                        "lambda2": sig(r.lambda2),
                        "inside": r.inside,
                        "margin": sig(r.margin),
                    });
                    if let Some(c) = r.certified {
                        v["certified"] = json!(c);
                    }
                    v
                })
                .collect(),
        )),
    };
    emit(settings, &text)
}

fn wire(spec: &Path, report: Option<&Path>, no_lemmas: bool, settings: &Settings) -> Result<()> {
    let instance = WiringSpec::load(spec, settings.tolerance)?;
    let derived = derived_box(&instance)?;
    emit(settings, &box_text(&derived))?;
    if no_lemmas {
        return Ok(());
    }
    let header = [
        "x_prime",
        "y_prime",
        "outputs_vs_transcripts",
        "local_output",
        "output_vs_other_record",
        "choice_vs_other_record",
        "record_chain_rule",
    ];
    let mut records = Vec::new();
    let mut worst: f64 = 0.0;
    for x in 0..instance.alice().external_card() {
        for y in 0..instance.bob().external_card() {
            let s = verify_structure_lemmas(&instance, x, y)?;
            let c = verify_chain_rule_lemma(&instance, x, y)?.residual();
            worst = worst.max(s.max()).max(c);
            records.push(vec![
                x.to_string(),
                y.to_string(),
                format_sig(s.outputs_vs_transcripts),
                format_sig(s.local_output),
                format_sig(s.output_vs_other_record),
                format_sig(s.choice_vs_other_record),
                format_sig(c),
            ]);
        }
    }
    let text = to_csv(&header, records)?;
    match report {
        Some(path) => std::fs::write(path, &text).map_err(|e| io_err(path, e))?,
        None => eprint!("{text}"),
    }
    if worst > LEMMA_TOLERANCE {
        return Err(CliError::Violation(format!(
            "largest residual {} exceeds {LEMMA_TOLERANCE:e}",
            format_sig(worst)
        )));
    }
    Ok(())
}

fn fuzz(
    campaign: Campaign,
    boxes: usize,
    cases: Option<usize>,
    channels: usize,
    settings: &Settings,
) -> Result<()> {
    let seed = settings.seed;
    let report = match campaign {
        Campaign::Rho => fuzz_rho_monotonicity(boxes, cases.unwrap_or(500), seed)?,
        Campaign::Mc => {
            let grid = RibbonPoint::grid(settings.grid.unwrap_or(DEFAULT_FUZZ_GRID));
            fuzz_mc_ribbon_monotonicity(boxes, cases.unwrap_or(200), &grid, seed)?
        }
        Campaign::HcIneq => fuzz_hc_wiring_inequality(boxes, cases.unwrap_or(50), channels, seed)?,
        Campaign::Lemmas => fuzz_structure_lemmas(boxes, cases.unwrap_or(300), seed)?,
        Campaign::Chain => check_sequential_chains(boxes, cases.unwrap_or(100), seed)?,
    };
    finish_report(&report, settings)
}

/// Prints the JSON summary, writes the report pair when `--out` is set and
/// maps failures to exit code 3.
fn finish_report(report: &FuzzReport, settings: &Settings) -> Result<()> {
    if let Some(stem) = &settings.out {
        report.write(stem)?;
    }
    match settings.format {
        Format::Json => println!("{}", report.summary_json()),
        Format::Csv if settings.out.is_none() => print!("{}", report.to_csv()),
        Format::Csv => println!("{}", report.summary_json()),
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Violation(format!(
            "{} of {} checks failed in campaign `{}`",
            report.failures.len(),
            report.checks(),
            report.campaign
        )))
    }
}

fn scan_isotropic(settings: &Settings) -> Result<()> {
    let k = settings.grid.unwrap_or(DEFAULT_SCAN_GRID).max(2);
    let mut etas: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
    if !etas.iter().any(|&e| (e - FRAC_1_SQRT_2).abs() < 1e-12) {
        etas.push(FRAC_1_SQRT_2);
        etas.sort_by(f64::total_cmp);
    }
    let rows = isotropic_scan(&etas)?;
    let text = match settings.format {
        Format::Csv => {
            let mut s = String::from(IsotropicRow::CSV_HEADER);
            s.push('\n');
            for r in &rows {
                s.push_str(&r.to_csv());
                s.push('\n');
            }
            s
        }
        Format::Json => json_text(&Value::Array(
            rows.iter()
                .map(|r| json!({"eta": sig(r.eta), "rho": sig(r.rho), "chsh": sig(r.chsh), "mc_inf_ratio": sig(r.mc_inf_ratio)}))
                .collect(),
        )),
    };
    emit(settings, &text)
}

fn pivot(eta2: f64, terms: &[String], settings: &Settings) -> Result<()> {
    let mut mixture = Vec::new();
    for t in terms {
        let (w, file) = t
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("mixture term `{t}` is not WEIGHT=FILE")))?;
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad weight in `{t}`")))?;
        mixture.push((w, load_box(Path::new(file), settings)?));
    }
    let v = common_randomness_argument(eta2, &mixture)?;
    let text = json_text(&json!({
        "verdict": v.summary(),
        "threshold": sig(v.threshold),
        "mixture_chsh": sig(v.mixture_chsh),
        "hypothesis_met": v.hypothesis_met,
        "component": v.component,
        "component_chsh": v.component_chsh.map(sig),
        "component_rho": v.component_rho.map(sig),
        "frontier_holds": v.frontier_holds,
    }));
    emit(settings, &text)?;
    if v.consistent() {
        Ok(())
    } else {
        Err(CliError::Violation("the mixture argument fails".into()))
    }
}
