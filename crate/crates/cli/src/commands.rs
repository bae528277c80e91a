use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use certcal::baselines::{apply_baseline, ece_of, fit_binning, fit_platt, scalarize, BaselineModel};
use certcal::lexicon::{fit_lexicon, read_survey};
use certcal::measure::{brier_and_accuracy, continuous_curve, measure_with, BootstrapConfig, MassMode, SamplingConfig};
use certcal::ot::{apply_policy, cost_matrix, policy_from_plan, solve_balanced, solve_unbalanced, OtConfig, PolicyMode};
use certcal::records::{read_raw_records, read_records, write_raw_records, write_records};
use certcal::reporting::{export_diagram, export_policy, export_transport, import_policy, DiagramSpec, ExportFormat};
use certcal::rng::{substream, Stream};
use certcal::synth::{generate, AgentSpec};
use certcal::{BinGrid, CertaintyLexicon, PredictionRecord};
use rand::seq::SliceRandom;
use serde_json::{json, Value};

use crate::{ApplyArgs, BaselineArgs, CalibrateArgs, Command, MassArg, MeasureArgs, MethodArg, ModeArg};

/// Files a command touched and the settings it ran with.
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config: Value,
    pub seed: Option<u64>,
}

pub fn execute(command: &Command) -> Result<Outcome> {
    match command {
        Command::LexiconFit { survey, out } => lexicon_fit(survey, out),
        Command::Measure(args) => measure(args),
        Command::Calibrate(args) => calibrate(args),
        Command::Apply(args) => apply(args),
        Command::Synth { spec, n, seed, out } => synth(spec, *n, *seed, out),
        Command::Baseline(args) => baseline(args),
        Command::Replay { .. } => unreachable!("replay is dispatched by the manifest runner"),
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn json_bytes(v: &Value) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

fn load_lexicon(path: &Path) -> Result<CertaintyLexicon<f64>> {
    Ok(CertaintyLexicon::load(path)?)
}

fn load_optional(path: &Option<PathBuf>) -> Result<Option<CertaintyLexicon<f64>>> {
    path.as_deref().map(load_lexicon).transpose()
}

fn load_records(
    path: &Path,
    lexicon: &CertaintyLexicon<f64>,
    labels: Option<&CertaintyLexicon<f64>>,
) -> Result<Vec<PredictionRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_records(BufReader::new(file), lexicon, labels).with_context(|| format!("reading {}", path.display()))
}

fn save_records(
    path: &Path,
    records: &[PredictionRecord],
    lexicon: &CertaintyLexicon<f64>,
    labels: Option<&CertaintyLexicon<f64>>,
) -> Result<()> {
    let mut buf = Vec::new();
    write_records(&mut buf, records, lexicon, labels)?;
    write(path, &buf)
}

fn inputs(paths: &[&Path], optional: &[&Option<PathBuf>]) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = paths.iter().map(|p| p.to_path_buf()).collect();
    v.extend(optional.iter().filter_map(|p| p.as_ref().cloned()));
    v
}

fn lexicon_fit(survey: &Path, out: &Path) -> Result<Outcome> {
    let file = File::open(survey).with_context(|| format!("opening {}", survey.display()))?;
    let stats = read_survey::<f64, _>(BufReader::new(file)).with_context(|| format!("reading {}", survey.display()))?;
    let fitted = fit_lexicon(&stats).with_context(|| format!("fitting {}", survey.display()))?;
    for phrase in &fitted.degenerate {
        eprintln!("note: {phrase:?} has (near) zero variance and was fitted as a point mass");
    }
    let mut bytes = fitted.lexicon.to_json_string()?.into_bytes();
    bytes.push(b'\n');
    write(out, &bytes)?;
    println!("fitted {} phrases", fitted.lexicon.len());
    Ok(Outcome {
        inputs: vec![survey.to_path_buf()],
        outputs: vec![out.to_path_buf()],
        config: json!({}),
        seed: None,
    })
}

fn mass_mode(m: MassArg) -> MassMode {
    match m {
        MassArg::Exact => MassMode::Exact,
        MassArg::Midpoint => MassMode::Midpoint,
        MassArg::MidpointExactExtremes => MassMode::MidpointExactExtremes,
    }
}

fn measure(args: &MeasureArgs) -> Result<Outcome> {
    let lexicon = load_lexicon(&args.lexicon)?;
    let labels = load_optional(&args.label_lexicon)?;
    let records = load_records(&args.records, &lexicon, labels.as_ref())?;
    let grid = BinGrid::equal_width(args.bins)?;
    let bootstrap = BootstrapConfig {
        resamples: args.bootstrap,
        seed: args.seed,
    };
    let report = measure_with(&records, &lexicon, labels.as_ref(), &grid, bootstrap, mass_mode(args.mass_mode))?;
    let sampling = SamplingConfig {
        resamples: args.bootstrap,
        draws_per_record: 1,
        seed: args.seed,
    };
    let scores = brier_and_accuracy(&records, &lexicon, labels.as_ref(), sampling)?;
    let doc = json!({ "schema": 1, "report": report, "scores": scores });
    write(&args.out, &json_bytes(&doc)?)?;
    println!(
        "ECE {:.4} [{:.4}, {:.4}]  ECE* {:.4} [{:.4}, {:.4}]  Brier {:.4}  accuracy {:.4}",
        report.ece.point,
        report.ece.ci.lower,
        report.ece.ci.upper,
        report.ece_star.point,
        report.ece_star.ci.lower,
        report.ece_star.ci.upper,
        scores.brier.point,
        scores.accuracy.point
    );

    let mut outputs = vec![args.out.clone()];
    if let Some(path) = &args.diagram {
        let format = ExportFormat::from_path(path)?;
        let curve = if args.curve {
            Some(continuous_curve(&records, &lexicon, labels.as_ref(), &grid.midpoints())?)
        } else {
            None
        };
        let spec = DiagramSpec::new(report, curve)?;
        write(path, &export_diagram(&spec, format)?)?;
        outputs.push(path.clone());
    }
    Ok(Outcome {
        inputs: inputs(&[&args.records, &args.lexicon], &[&args.label_lexicon]),
        outputs,
        config: json!({
            "bins": args.bins,
            "bootstrap": args.bootstrap,
            "mass_mode": mass_mode(args.mass_mode),
            "curve": args.curve,
        }),
        seed: Some(args.seed),
    })
}

fn parse_split(s: &str) -> Result<f64> {
    let (a, b) = s.split_once(':').context("split must look like `calib:test`, e.g. 0.5:0.5")?;
    let a: f64 = a.trim().parse().context("split calibration share")?;
    let b: f64 = b.trim().parse().context("split test share")?;
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        bail!("split shares must be positive");
    }
    Ok(a / (a + b))
}

/// Per-phrase shuffled split; returns (calibration, test).
fn stratified_split(
    records: &[PredictionRecord],
    phrases: usize,
    calib_share: f64,
    seed: u64,
) -> (Vec<PredictionRecord>, Vec<PredictionRecord>) {
    let mut rng = substream(seed, Stream::Split, 0);
    let mut groups = vec![Vec::new(); phrases];
    for (i, r) in records.iter().enumerate() {
        groups[r.phrase].push(i);
    }
    let mut calib_idx = Vec::new();
    let mut test_idx = Vec::new();
    for mut g in groups {
        g.shuffle(&mut rng);
        let cut = (calib_share * g.len() as f64).round() as usize;
        calib_idx.extend_from_slice(&g[..cut]);
        test_idx.extend_from_slice(&g[cut..]);
    }
    calib_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect();
    (pick(&calib_idx), pick(&test_idx))
}

fn policy_mode(m: ModeArg) -> PolicyMode {
    match m {
        ModeArg::Stochastic => PolicyMode::Stochastic,
        ModeArg::Argmax => PolicyMode::Argmax,
    }
}

fn calibrate(args: &CalibrateArgs) -> Result<Outcome> {
    let source = load_lexicon(&args.source_lexicon)?;
    let target = match &args.target_lexicon {
        Some(p) => load_lexicon(p)?,
        None => source.clone(),
    };
    let labels = load_optional(&args.label_lexicon)?;
    let records = load_records(&args.records, &source, labels.as_ref())?;
    let mut outputs = Vec::new();

    let calib = match &args.split {
        Some(s) => {
            let share = parse_split(s)?;
            let (calib, test) = stratified_split(&records, source.len(), share, args.seed);
            if let Some(path) = &args.test_out {
                save_records(path, &test, &source, labels.as_ref())?;
                outputs.push(path.clone());
            }
            eprintln!("split: {} calibration, {} test records", calib.len(), test.len());
            calib
        }
        None => {
            if args.test_out.is_some() {
                bail!("--test-out needs --split");
            }
            records
        }
    };

    let grid = BinGrid::equal_width(args.bins)?;
    let mut cost = cost_matrix(&calib, &source, &target, labels.as_ref(), &grid)?;
    let config = OtConfig {
        epsilon: args.epsilon,
        tau1: args.tau1,
        tau2: args.tau2,
        max_iterations: args.max_iterations,
        tolerance: args.tolerance,
        seed: args.seed,
    };
    let plan = match &args.balanced_b {
        Some(b) => {
            cost = cost.with_target_weights(b.clone())?;
            solve_balanced(&cost, b, &config)?
        }
        None => solve_unbalanced(&cost, &config)?,
    };
    if !plan.converged {
        eprintln!(
            "warning: solver stopped after {} iterations without converging",
            plan.iterations
        );
    }
    let policy = policy_from_plan(&plan, &cost, &source, &target, policy_mode(args.mode))?;
    let format = ExportFormat::from_path(&args.plan)?;
    write(&args.plan, &export_transport(&cost, &plan, &policy, &config, format)?)?;
    write(&args.policy, &export_policy(&policy)?)?;
    outputs.insert(0, args.policy.clone());
    outputs.insert(0, args.plan.clone());
    for line in policy.summary() {
        println!("{line}");
    }
    Ok(Outcome {
        inputs: inputs(
            &[&args.records, &args.source_lexicon],
            &[&args.target_lexicon, &args.label_lexicon],
        ),
        outputs,
        config: json!({
            "bins": args.bins,
            "ot": config,
            "balanced_b": args.balanced_b,
            "split": args.split,
            "mode": policy.mode,
        }),
        seed: Some(args.seed),
    })
}

fn apply(args: &ApplyArgs) -> Result<Outcome> {
    let bytes = fs::read(&args.policy).with_context(|| format!("reading {}", args.policy.display()))?;
    let mut policy = import_policy::<f64>(&bytes).with_context(|| format!("parsing {}", args.policy.display()))?;
    if let Some(m) = args.mode {
        policy.mode = policy_mode(m);
    }
    let file = File::open(&args.records).with_context(|| format!("opening {}", args.records.display()))?;
    let mut raw = read_raw_records(BufReader::new(file))?;
    let mut indexed = Vec::with_capacity(raw.len());
    for r in &raw {
        let Some(k) = policy.source_phrases.iter().position(|p| *p == r.phrase) else {
            bail!("line {}: phrase {:?} is not covered by the policy", r.line, r.phrase);
        };
        indexed.push(PredictionRecord::hard(r.id.clone(), k, false));
    }
    let mapped = apply_policy(&indexed, &policy, args.seed)?;
    for (r, m) in raw.iter_mut().zip(&mapped) {
        r.phrase = policy.target_phrases[m.phrase].clone();
    }
    let mut buf = Vec::new();
    write_raw_records(&mut buf, &raw)?;
    write(&args.out, &buf)?;
    Ok(Outcome {
        inputs: vec![args.records.clone(), args.policy.clone()],
        outputs: vec![args.out.clone()],
        config: json!({ "mode": policy.mode }),
        seed: Some(args.seed),
    })
}

fn synth(spec_path: &Path, n: usize, seed: u64, out: &Path) -> Result<Outcome> {
    let spec = AgentSpec::<f64>::load(spec_path)?;
    let records = generate(&spec, n, seed)?;
    save_records(out, &records, &spec.lexicon, spec.label_lexicon.as_ref())?;
    Ok(Outcome {
        inputs: vec![spec_path.to_path_buf()],
        outputs: vec![out.to_path_buf()],
        config: json!({ "n": n }),
        seed: Some(seed),
    })
}

fn baseline(args: &BaselineArgs) -> Result<Outcome> {
    let lexicon = load_lexicon(&args.lexicon)?;
    let labels = load_optional(&args.label_lexicon)?;
    let fit_records = load_records(&args.records, &lexicon, labels.as_ref())?;
    let fit_scalar = scalarize(&fit_records, &lexicon, labels.as_ref())?;
    let grid = BinGrid::equal_width(args.bins)?;
    let model = match args.method {
        MethodArg::Platt => {
            let m = fit_platt(&fit_scalar)?;
            if m.separable {
                eprintln!("warning: targets are separable; Platt parameters were clamped");
            }
            BaselineModel::Platt(m)
        }
        MethodArg::Binning => BaselineModel::Binning(fit_binning(&fit_scalar, &grid)?),
    };
    let mut model_bytes = model.to_json_string()?.into_bytes();
    model_bytes.push(b'\n');
    write(&args.model, &model_bytes)?;

    let eval_scalar = match &args.eval {
        Some(p) => scalarize(&load_records(p, &lexicon, labels.as_ref())?, &lexicon, labels.as_ref())?,
        None => fit_scalar,
    };
    let calibrated = apply_baseline(&model, &eval_scalar);
    let mut csv = String::from("id,score,calibrated,target\n");
    for (before, after) in eval_scalar.iter().zip(&calibrated) {
        csv.push_str(&format!("{},{},{},{}\n", before.id, before.score, after.score, before.target));
    }
    write(&args.out, csv.as_bytes())?;
    println!(
        "scalar ECE {:.4} -> {:.4}",
        ece_of(&eval_scalar, &grid),
        ece_of(&calibrated, &grid)
    );
    Ok(Outcome {
        inputs: inputs(&[&args.records, &args.lexicon], &[&args.label_lexicon, &args.eval]),
        outputs: vec![args.model.clone(), args.out.clone()],
        config: json!({ "method": format!("{:?}", args.method).to_lowercase(), "bins": args.bins }),
        seed: None,
    })
}
