//! Command-line front end for the crossbar BBNN simulator.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or config error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use bbnn_sim::cost::{self, CostConfig, CostReport};
use bbnn_sim::device::DeviceConfig;
use bbnn_sim::engine::{program_network, EngineConfig, MappingMode};
use bbnn_sim::model::{
    self, generate_toy_model, load_inputs, load_network_spec, load_probability_map,
    sample_ensembles, save_inputs, save_network_spec, save_probability_map, NetworkSpec,
    ProbabilityMap,
};
use bbnn_sim::sparsity::{clamp, clamp_before_fel, layer_stats, select_fel};
use bbnn_sim::split::{map_layer_sp, split_dp_sp};
use bbnn_sim::tensor::Tensor;
use bbnn_sim::uncertainty::{decompose, roc_curve};

#[derive(Parser)]
#[command(name = "bbnn-sim", version, about = "Bayesian binary neural network crossbar simulator")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags mirror the run-config file; precedence is flag > config > default.
#[derive(Args, Default)]
struct GlobalArgs {
    /// Run-config TOML file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Network spec TOML.
    #[arg(long, global = true)]
    network: Option<PathBuf>,
    /// Probability-map container.
    #[arg(long, global = true)]
    map: Option<PathBuf>,
    /// Input-tensor container.
    #[arg(long, global = true)]
    inputs: Option<PathBuf>,
    /// Label file, one class index per line.
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    /// Device config TOML.
    #[arg(long, global = true)]
    device: Option<PathBuf>,
    /// Cost config TOML.
    #[arg(long, global = true)]
    cost: Option<PathBuf>,
    /// Mapping mode: dense, ls, or lsrs.
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    n_mc: Option<usize>,
    /// Probability clamping threshold.
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Cumulative probabilistic-mass threshold for FEL selection.
    #[arg(long, global = true)]
    mass_threshold: Option<f64>,
    /// First-ensembling-layer override (1-based).
    #[arg(long, global = true)]
    fel: Option<usize>,
    #[arg(long, global = true)]
    subarray_rows: Option<usize>,
    #[arg(long, global = true)]
    subarray_cols: Option<usize>,
    /// Evaluation time in seconds (>= t0).
    #[arg(long, global = true)]
    drift_time: Option<f64>,
    /// Apply global drift compensation.
    #[arg(long, global = true)]
    compensate: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a toy network, probability map, inputs, and labels.
    Toy {
        /// Preset: vgg9 or small.
        #[arg(long, default_value = "vgg9")]
        preset: String,
        /// Number of evaluation inputs to generate.
        #[arg(long, default_value_t = 16)]
        count: usize,
    },
    /// Per-layer sparsity profile as CSV.
    Analyze,
    /// Clamp probabilities, select the FEL, and write the clamped map.
    Clamp,
    /// DP/SP mapping report: per-tile f_p, retained rows, subarray packing.
    Split,
    /// Run inference and write per-input predictions and uncertainties.
    Simulate,
    /// ROC curves from a simulate predictions file.
    Roc {
        /// Predictions CSV from `simulate`.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Second predictions CSV treated as out-of-distribution.
        #[arg(long)]
        ood: Option<PathBuf>,
    },
    /// Cost report for the configured mode.
    Project,
    /// Cost comparison across modes and subarray sizes.
    Sweep {
        /// Subarray sizes to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = vec![32usize, 64, 128, 256])]
        sizes: Vec<usize>,
    },
}

/// Fully resolved run configuration; written beside every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    network: Option<PathBuf>,
    map: Option<PathBuf>,
    inputs: Option<PathBuf>,
    labels: Option<PathBuf>,
    device: Option<PathBuf>,
    cost: Option<PathBuf>,
    mode: String,
    n_mc: usize,
    tau: f64,
    mass_threshold: f64,
    fel: Option<usize>,
    subarray_rows: usize,
    subarray_cols: usize,
    seed: u64,
    drift_time: f64,
    compensate: bool,
    output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            network: None,
            map: None,
            inputs: None,
            labels: None,
            device: None,
            cost: None,
            mode: "ls".into(),
            n_mc: 10,
            tau: 0.01,
            mass_threshold: 0.9,
            fel: None,
            subarray_rows: 128,
            subarray_cols: 128,
            seed: 0,
            drift_time: 1.0,
            compensate: false,
            output: PathBuf::from("out"),
        }
    }
}

/// File-level config: every field optional so flags can override.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    network: Option<PathBuf>,
    map: Option<PathBuf>,
    inputs: Option<PathBuf>,
    labels: Option<PathBuf>,
    device: Option<PathBuf>,
    cost: Option<PathBuf>,
    mode: Option<String>,
    n_mc: Option<usize>,
    tau: Option<f64>,
    mass_threshold: Option<f64>,
    fel: Option<usize>,
    subarray_rows: Option<usize>,
    subarray_cols: Option<usize>,
    seed: Option<u64>,
    drift_time: Option<f64>,
    compensate: Option<bool>,
    output: Option<PathBuf>,
}

fn resolve_config(g: &GlobalArgs) -> Result<RunConfig> {
    let file: FileConfig = match &g.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => FileConfig::default(),
    };
    let d = RunConfig::default();
    Ok(RunConfig {
        network: g.network.clone().or(file.network),
        map: g.map.clone().or(file.map),
        inputs: g.inputs.clone().or(file.inputs),
        labels: g.labels.clone().or(file.labels),
        device: g.device.clone().or(file.device),
        cost: g.cost.clone().or(file.cost),
        mode: g.mode.clone().or(file.mode).unwrap_or(d.mode),
        n_mc: g.n_mc.or(file.n_mc).unwrap_or(d.n_mc),
        tau: g.tau.or(file.tau).unwrap_or(d.tau),
        mass_threshold: g.mass_threshold.or(file.mass_threshold).unwrap_or(d.mass_threshold),
        fel: g.fel.or(file.fel),
        subarray_rows: g.subarray_rows.or(file.subarray_rows).unwrap_or(d.subarray_rows),
        subarray_cols: g.subarray_cols.or(file.subarray_cols).unwrap_or(d.subarray_cols),
        seed: g.seed.or(file.seed).unwrap_or(d.seed),
        drift_time: g.drift_time.or(file.drift_time).unwrap_or(d.drift_time),
        compensate: g.compensate || file.compensate.unwrap_or(d.compensate),
        output: g.output.clone().or(file.output).unwrap_or(d.output),
    })
}

fn parse_mode(s: &str) -> Result<MappingMode> {
    match s {
        "dense" => Ok(MappingMode::Dense),
        "ls" => Ok(MappingMode::Ls),
        "lsrs" => Ok(MappingMode::LsRs),
        other => bail!("unknown mode '{other}' (expected dense, ls, or lsrs)"),
    }
}

/// Write-temp-then-rename so readers never see partial output.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn snapshot_config(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output)
        .with_context(|| format!("creating {}", cfg.output.display()))?;
    let text = toml::to_string_pretty(cfg)?;
    write_atomic(&cfg.output.join("config_snapshot.toml"), text.as_bytes())
}

fn load_required_spec(cfg: &RunConfig) -> Result<NetworkSpec> {
    let path = cfg.network.as_ref().ok_or_else(|| anyhow!("no network spec configured"))?;
    Ok(load_network_spec(path)?)
}

fn load_required_map(cfg: &RunConfig, spec: &NetworkSpec) -> Result<ProbabilityMap> {
    let path = cfg.map.as_ref().ok_or_else(|| anyhow!("no probability map configured"))?;
    Ok(load_probability_map(path, spec)?)
}

fn load_device(cfg: &RunConfig) -> Result<DeviceConfig> {
    let dev = match &cfg.device {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => DeviceConfig::default(),
    };
    dev.validate()?;
    Ok(dev)
}

fn load_cost(cfg: &RunConfig) -> Result<CostConfig> {
    let c = match &cfg.cost {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => CostConfig::default(),
    };
    c.validate()?;
    Ok(c)
}

/// Clamp the map, pick the FEL (override wins), and pre-round early layers.
/// Dense mode skips the FEL machinery when the map is fully deterministic.
fn prepare_map(
    cfg: &RunConfig,
    map: &ProbabilityMap,
    mode: MappingMode,
) -> Result<(ProbabilityMap, usize)> {
    let clamped = clamp(map, cfg.tau)?;
    let stats = layer_stats(&clamped);
    let fel = match cfg.fel {
        Some(f) => f,
        None => {
            if !stats.has_probabilistic {
                if mode == MappingMode::Dense {
                    return Ok((clamped, 1));
                }
                bail!("map is fully deterministic; use --mode dense or --fel");
            }
            select_fel(&stats, cfg.mass_threshold)?.fel
        }
    };
    Ok((clamp_before_fel(&clamped, fel), fel))
}

fn engine_config(cfg: &RunConfig, mode: MappingMode, fel: usize) -> EngineConfig {
    let mut e = EngineConfig::new(mode, cfg.n_mc, fel);
    e.subarray_rows = cfg.subarray_rows;
    e.subarray_cols = cfg.subarray_cols;
    e.drift_time = cfg.drift_time;
    e.compensate = cfg.compensate;
    e.seed = cfg.seed;
    e
}

fn cmd_toy(cfg: &RunConfig, preset: &str, count: usize) -> Result<()> {
    let (spec, toy_cfg) = match preset {
        "vgg9" => (model::vgg9_spec(cfg.seed), model::deep_heavy_targets()),
        "small" => (
            model::small_cnn_spec(cfg.seed),
            model::ToyConfig::new(vec![0.001, 0.001, 0.02, 0.03]),
        ),
        other => bail!("unknown preset '{other}' (expected vgg9 or small)"),
    };
    let map = generate_toy_model(&spec, &toy_cfg, cfg.seed)?;
    snapshot_config(cfg)?;
    let spec_path = cfg.output.join("network.toml");
    let map_path = cfg.output.join("map.bbnp");
    save_network_spec(&spec, &spec_path)?;
    save_probability_map(&map, &map_path)?;

    // random integer-valued inputs in the quantizer's comfortable range
    let mut rng = bbnn_sim::rng::KeyedRng::new(bbnn_sim::rng::StreamKey::new(
        cfg.seed,
        bbnn_sim::rng::domain::TOY,
    ));
    let flat = spec.input.flat();
    let inputs: Vec<Tensor> = (0..count)
        .map(|_| {
            let data = (0..flat).map(|_| (rng.index(41) as f32) - 20.0).collect();
            Tensor::from_vec(
                vec![spec.input.channels, spec.input.height, spec.input.width],
                data,
            )
            .unwrap()
        })
        .collect();
    let inputs_path = cfg.output.join("inputs.bbni");
    save_inputs(&inputs, &inputs_path)?;

    // labels from a noise-free reference run so the task is learnable
    let (eff, fel) = prepare_map(cfg, &map, MappingMode::Ls)?;
    let ens = sample_ensembles(&eff, cfg.n_mc, cfg.seed)?;
    let mut ecfg = engine_config(cfg, MappingMode::Ls, fel);
    ecfg.drift_time = 1.0;
    ecfg.compensate = false;
    let state = program_network(&spec, &eff, &ens, &ecfg, &DeviceConfig::ideal())?;
    let mut labels = String::new();
    for (i, x) in inputs.iter().enumerate() {
        let ps = state.run_inference(x, i as u64)?;
        labels.push_str(&format!("{}\n", ps.predicted_class()));
    }
    write_atomic(&cfg.output.join("labels.txt"), labels.as_bytes())?;
    println!(
        "wrote {} / {} / {} inputs / labels (fel = {fel})",
        spec_path.display(),
        map_path.display(),
        count
    );
    Ok(())
}

fn cmd_analyze(cfg: &RunConfig) -> Result<()> {
    let spec = load_required_spec(cfg)?;
    let map = load_required_map(cfg, &spec)?;
    let stats = layer_stats(&map);
    let mut csv = String::from("layer,n,n_p,frac_of_layer,frac_of_total\n");
    for l in 0..stats.layer_totals.len() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            l + 1,
            stats.layer_totals[l],
            stats.layer_probabilistic[l],
            stats.frac_of_layer[l],
            stats.frac_of_total[l],
        ));
    }
    snapshot_config(cfg)?;
    let path = cfg.output.join("sparsity.csv");
    write_atomic(&path, csv.as_bytes())?;
    println!(
        "{} layers, {} probabilistic / {} total synapses -> {}",
        stats.layer_totals.len(),
        stats.total_probabilistic,
        stats.total_probabilistic + stats.total_deterministic,
        path.display()
    );
    Ok(())
}

fn cmd_clamp(cfg: &RunConfig) -> Result<()> {
    let spec = load_required_spec(cfg)?;
    let map = load_required_map(cfg, &spec)?;
    let before = layer_stats(&map);
    let clamped = clamp(&map, cfg.tau)?;
    let stats = layer_stats(&clamped);
    let fel = match cfg.fel {
        Some(f) => f,
        None => select_fel(&stats, cfg.mass_threshold)?.fel,
    };
    let rounded = clamp_before_fel(&clamped, fel);
    let after = layer_stats(&rounded);
    snapshot_config(cfg)?;
    let out_map = cfg.output.join("map_clamped.bbnp");
    save_probability_map(&rounded, &out_map)?;
    let mut csv = String::from("layer,n_p_before,n_p_after\n");
    for l in 0..before.layer_totals.len() {
        csv.push_str(&format!(
            "{},{},{}\n",
            l + 1,
            before.layer_probabilistic[l],
            after.layer_probabilistic[l]
        ));
    }
    write_atomic(&cfg.output.join("clamp_report.csv"), csv.as_bytes())?;
    println!(
        "tau = {}, fel = {fel}: {} -> {} probabilistic synapses -> {}",
        cfg.tau,
        before.total_probabilistic,
        after.total_probabilistic,
        out_map.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SplitReport {
    layer: usize,
    fel: usize,
    tiles: Vec<TileReport>,
    subarrays: usize,
}

#[derive(Serialize)]
struct TileReport {
    tile: usize,
    rows: usize,
    cols: usize,
    retained_rows: usize,
    f_p: f64,
    segments: Vec<SegmentReport>,
}

#[derive(Serialize)]
struct SegmentReport {
    subarray: usize,
    ensemble: usize,
    rows: usize,
}

fn cmd_split(cfg: &RunConfig) -> Result<()> {
    let spec = load_required_spec(cfg)?;
    let map = load_required_map(cfg, &spec)?;
    let (eff, fel) = prepare_map(cfg, &map, MappingMode::LsRs)?;
    snapshot_config(cfg)?;
    let mut csv = String::from("layer,tile,tile_rows,tile_cols,retained_rows,f_p,subarrays\n");
    let mut reports = Vec::new();
    for (l, layer) in spec.layers.iter().enumerate().skip(fel - 1) {
        let prob = bbnn_sim::lower::lowered_probabilities(layer, &eff.layers[l]);
        let planes = split_dp_sp(&prob);
        let sp = map_layer_sp(&planes, cfg.subarray_rows, cfg.subarray_cols, cfg.n_mc)?;
        let mut tiles = Vec::new();
        for (t, sq) in sp.squeezed.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                l + 1,
                t,
                sq.tile.rows,
                sq.tile.cols,
                sq.retained_rows(),
                sq.f_p,
                sp.packed[t].len()
            ));
            let mut segments = Vec::new();
            for (s, pack) in sp.packed[t].iter().enumerate() {
                for seg in &pack.segments {
                    segments.push(SegmentReport {
                        subarray: s,
                        ensemble: seg.ensemble,
                        rows: seg.gather_hi - seg.gather_lo,
                    });
                }
            }
            tiles.push(TileReport {
                tile: t,
                rows: sq.tile.rows,
                cols: sq.tile.cols,
                retained_rows: sq.retained_rows(),
                f_p: sq.f_p,
                segments,
            });
        }
        reports.push(SplitReport { layer: l + 1, fel, tiles, subarrays: sp.subarray_count() });
    }
    write_atomic(&cfg.output.join("split.csv"), csv.as_bytes())?;
    let json = serde_json::to_string_pretty(&reports)?;
    write_atomic(&cfg.output.join("split.json"), json.as_bytes())?;
    let total: usize = reports.iter().map(|r| r.subarrays).sum();
    println!("fel = {fel}, {} split layers, {total} SP subarrays -> split.csv / split.json", reports.len());
    Ok(())
}

fn read_labels(path: &Path, count: usize, classes: usize) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let labels: Vec<usize> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<usize>().map_err(|e| anyhow!("bad label '{l}': {e}")))
        .collect::<Result<_>>()?;
    if labels.len() != count {
        bail!("{} labels for {} inputs", labels.len(), count);
    }
    if let Some(l) = labels.iter().find(|&&l| l >= classes) {
        bail!("label {l} out of range for {classes} classes");
    }
    Ok(labels)
}

fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let mode = parse_mode(&cfg.mode)?;
    let spec = load_required_spec(cfg)?;
    let map = load_required_map(cfg, &spec)?;
    let inputs_path = cfg.inputs.as_ref().ok_or_else(|| anyhow!("no inputs configured"))?;
    let inputs = load_inputs(inputs_path, &spec)?;
    let labels = match &cfg.labels {
        Some(p) => Some(read_labels(p, inputs.len(), spec.classes)?),
        None => None,
    };
    let dev = load_device(cfg)?;
    let (eff, fel) = prepare_map(cfg, &map, mode)?;
    let ens = sample_ensembles(&eff, cfg.n_mc, cfg.seed)?;
    let ecfg = engine_config(cfg, mode, fel);
    let state = program_network(&spec, &eff, &ens, &ecfg, &dev)?;
    if !state.uncompensated.is_empty() {
        eprintln!(
            "warning: layers {:?} have no batch norm and are not drift-compensated",
            state.uncompensated
        );
    }
    let mut csv = String::from("input,predicted,label,correct,u_total,u_aleatoric,u_epistemic\n");
    let mut correct = 0usize;
    for (i, x) in inputs.iter().enumerate() {
        let ps = state.run_inference(x, i as u64)?;
        let pred = ps.predicted_class();
        let u = decompose(&ps);
        let (label_s, correct_s) = match &labels {
            Some(ls) => {
                let ok = ls[i] == pred;
                if ok {
                    correct += 1;
                }
                (ls[i].to_string(), (ok as u8).to_string())
            }
            None => (String::new(), String::new()),
        };
        csv.push_str(&format!(
            "{i},{pred},{label_s},{correct_s},{},{},{}\n",
            u.total, u.aleatoric, u.epistemic
        ));
    }
    snapshot_config(cfg)?;
    write_atomic(&cfg.output.join("predictions.csv"), csv.as_bytes())?;
    let accuracy = labels.as_ref().map(|ls| correct as f64 / ls.len() as f64);
    let summary = serde_json::json!({
        "mode": cfg.mode,
        "n_mc": cfg.n_mc,
        "fel": fel,
        "inputs": inputs.len(),
        "accuracy": accuracy,
        "drift_time": cfg.drift_time,
        "compensate": cfg.compensate,
    });
    write_atomic(
        &cfg.output.join("summary.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    match accuracy {
        Some(a) => println!("{} inputs, accuracy {a:.4} -> predictions.csv", inputs.len()),
        None => println!("{} inputs (no labels) -> predictions.csv", inputs.len()),
    }
    Ok(())
}

struct PredictionRow {
    correct: Option<bool>,
    u_aleatoric: f64,
    u_epistemic: f64,
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            bail!("{}:{}: expected 7 fields, got {}", path.display(), i + 1, f.len());
        }
        rows.push(PredictionRow {
            correct: match f[3] {
                "" => None,
                "0" => Some(false),
                "1" => Some(true),
                other => bail!("bad correct flag '{other}'"),
            },
            u_aleatoric: f[5].parse()?,
            u_epistemic: f[6].parse()?,
        });
    }
    Ok(rows)
}

fn write_roc_csv(path: &Path, curve: &bbnn_sim::uncertainty::RocCurve) -> Result<()> {
    let mut csv = String::from("fpr,tpr,threshold\n");
    for p in &curve.points {
        csv.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
    }
    write_atomic(path, csv.as_bytes())
}

fn cmd_roc(cfg: &RunConfig, predictions: Option<&Path>, ood: Option<&Path>) -> Result<()> {
    let default_path = cfg.output.join("predictions.csv");
    let path = predictions.unwrap_or(&default_path);
    let rows = read_predictions(path)?;
    snapshot_config(cfg)?;
    let mut summary = String::from("curve,auc\n");

    // aleatoric: does U_a flag misclassification?
    if rows.iter().all(|r| r.correct.is_some()) {
        let scores: Vec<f64> = rows.iter().map(|r| r.u_aleatoric).collect();
        let positive: Vec<bool> = rows.iter().map(|r| !r.correct.unwrap()).collect();
        match roc_curve(&scores, &positive) {
            Ok(curve) => {
                write_roc_csv(&cfg.output.join("roc_aleatoric.csv"), &curve)?;
                summary.push_str(&format!("aleatoric,{}\n", curve.auc));
                println!("aleatoric AUC = {:.4}", curve.auc);
            }
            Err(e) => eprintln!("aleatoric ROC skipped: {e}"),
        }
    } else {
        eprintln!("aleatoric ROC skipped: predictions lack labels");
    }

    // epistemic: does U_e separate OOD from in-distribution?
    if let Some(ood_path) = ood {
        let ood_rows = read_predictions(ood_path)?;
        let scores: Vec<f64> = rows
            .iter()
            .chain(&ood_rows)
            .map(|r| r.u_epistemic)
            .collect();
        let positive: Vec<bool> = rows
            .iter()
            .map(|_| false)
            .chain(ood_rows.iter().map(|_| true))
            .collect();
        let curve = roc_curve(&scores, &positive)?;
        write_roc_csv(&cfg.output.join("roc_epistemic.csv"), &curve)?;
        summary.push_str(&format!("epistemic,{}\n", curve.auc));
        println!("epistemic AUC = {:.4}", curve.auc);
    }
    write_atomic(&cfg.output.join("roc_summary.csv"), summary.as_bytes())?;
    Ok(())
}

fn estimate_for(
    cfg: &RunConfig,
    spec: &NetworkSpec,
    map: &ProbabilityMap,
    dev: &DeviceConfig,
    cost_cfg: &CostConfig,
    mode: MappingMode,
    subarray: usize,
) -> Result<CostReport> {
    let (eff, fel) = prepare_map(cfg, map, mode)?;
    let mut ecfg = engine_config(cfg, mode, fel);
    ecfg.subarray_rows = subarray;
    ecfg.subarray_cols = subarray;
    Ok(cost::estimate(spec, &eff, &ecfg, dev.input_bits, cost_cfg)?)
}

fn cmd_project(cfg: &RunConfig) -> Result<()> {
    let mode = parse_mode(&cfg.mode)?;
    let spec = load_required_spec(cfg)?;
    let map = load_required_map(cfg, &spec)?;
    let dev = load_device(cfg)?;
    let cost_cfg = load_cost(cfg)?;
    let report = estimate_for(cfg, &spec, &map, &dev, &cost_cfg, mode, cfg.subarray_rows)?;
    snapshot_config(cfg)?;
    let path = cfg.output.join(format!("cost_{}.json", cfg.mode));
    write_atomic(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    println!(
        "{}: latency {:.3e} s, {:.1} FPS, {:.3e} J/image, {:.3e} m^2 -> {}",
        cfg.mode,
        report.latency_s,
        report.fps,
        report.energy_per_image_j,
        report.area_m2,
        path.display()
    );
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, sizes: &[usize]) -> Result<()> {
    let spec = load_required_spec(cfg)?;
    let map = load_required_map(cfg, &spec)?;
    let dev = load_device(cfg)?;
    let cost_cfg = load_cost(cfg)?;
    snapshot_config(cfg)?;
    let modes = [MappingMode::Dense, MappingMode::Ls, MappingMode::LsRs];
    let mut csv = String::from(
        "mode,subarray,latency_s,pipelined_interval_s,fps,energy_j,area_m2,edp,leap,\
         energy_gain_vs_dense,area_gain_vs_dense,leap_gain_vs_dense\n",
    );
    for &size in sizes {
        let dense = estimate_for(cfg, &spec, &map, &dev, &cost_cfg, MappingMode::Dense, size)?;
        for mode in modes {
            let r = if mode == MappingMode::Dense {
                dense.clone()
            } else {
                estimate_for(cfg, &spec, &map, &dev, &cost_cfg, mode, size)?
            };
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                mode,
                size,
                r.latency_s,
                r.pipelined_interval_s,
                r.fps,
                r.energy_per_image_j,
                r.area_m2,
                r.edp,
                r.leap,
                dense.energy_per_image_j / r.energy_per_image_j,
                dense.area_m2 / r.area_m2,
                dense.leap / r.leap,
            ));
        }
    }
    let path = cfg.output.join("sweep.csv");
    write_atomic(&path, csv.as_bytes())?;
    println!("{} modes x {} sizes -> {}", modes.len(), sizes.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    match &cli.command {
        Command::Toy { preset, count } => cmd_toy(&cfg, preset, *count),
        Command::Analyze => cmd_analyze(&cfg),
        Command::Clamp => cmd_clamp(&cfg),
        Command::Split => cmd_split(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::Roc { predictions, ood } => {
            cmd_roc(&cfg, predictions.as_deref(), ood.as_deref())
        }
        Command::Project => cmd_project(&cfg),
        Command::Sweep { sizes } => cmd_sweep(&cfg, sizes),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
