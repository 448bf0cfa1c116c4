use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use aia_core::analysis::{default_bin_edges, spike_comparison_csv, spike_count_report, weight_shift_report};
use aia_core::bptt::{backward, gradcheck_with, GradcheckOptions};
use aia_core::checkpoint::{load_checkpoint, save_checkpoint};
use aia_core::data::{
    bin_events, binning_hash, gen_poisson_patterns, load_cache, load_manifest, save_cache, Dataset, SpikeTensor, Split,
};
use aia_core::train::evaluate;
use aia_core::{forward_record, init_network, merge_beta, train, Network, NetworkSpec, NeuronModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{self, DataSource, ExperimentConfig, GenDataConfig, GradcheckConfig};
use crate::CliError;

/// Flags that override config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub model: Option<NeuronModel>,
    pub threads: Option<usize>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn parse_hash(text: &str) -> Result<[u8; 32], CliError> {
    let bad = || CliError::Usage(format!("params_hash must be 64 hex digits, got `{text}`"));
    if text.len() != 64 {
        return Err(bad());
    }
    let mut out = [0u8; 32];
    for (k, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&text[2 * k..2 * k + 2], 16).map_err(|_| bad())?;
    }
    Ok(out)
}

/// Creates `<out>/<prefix>-<timestamp>[-n]`, never reusing an existing directory.
pub fn create_run_dir(out: &Path, prefix: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    for n in 0.. {
        let name = if n == 0 {
            format!("{prefix}-{stamp}")
        } else {
            format!("{prefix}-{stamp}-{n}")
        };
        let dir = out.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::Usage(format!("cannot create {}: {e}", dir.display()))),
        }
    }
    unreachable!("run directory suffixes exhausted")
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(path, text + "\n")
}

fn load_dataset(cfg: &ExperimentConfig, config_path: &Path) -> Result<Dataset, CliError> {
    Ok(match &cfg.data {
        DataSource::Poisson(p) => gen_poisson_patterns(p)?,
        DataSource::Cache { path, params_hash } => {
            let expected = params_hash.as_deref().map(parse_hash).transpose()?;
            load_cache(&config::resolve(config_path, path), expected.as_ref())?
        }
    })
}

fn split_dataset(cfg: &ExperimentConfig, config_path: &Path) -> Result<(Dataset, Dataset), CliError> {
    let ds = load_dataset(cfg, config_path)?;
    Ok(ds.split(cfg.test_fraction, cfg.split_seed)?)
}

fn network_spec(cfg: &ExperimentConfig, ds: &Dataset) -> NetworkSpec {
    let mut widths = cfg.hidden.clone();
    widths.push(ds.class_count);
    NetworkSpec::uniform(ds.inputs.neurons(), &widths, cfg.model, ds.inputs.timesteps())
}

fn check_fits(net: &Network, ds: &Dataset) -> Result<(), CliError> {
    if net.input_width() != ds.inputs.neurons()
        || net.timesteps() != ds.inputs.timesteps()
        || net.class_count() != ds.class_count
    {
        return Err(CliError::Usage(format!(
            "checkpoint expects {} inputs x {} steps -> {} classes; dataset has {} x {} -> {}",
            net.input_width(),
            net.timesteps(),
            net.class_count(),
            ds.inputs.neurons(),
            ds.inputs.timesteps(),
            ds.class_count
        )));
    }
    Ok(())
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

pub fn apply_overrides(cfg: &mut ExperimentConfig, o: &Overrides) {
    if let Some(seed) = o.seed {
        cfg.train.seed = seed;
    }
    if let Some(model) = o.model {
        cfg.model = model;
    }
    if let Some(threads) = o.threads {
        cfg.train.threads = threads;
    }
}

pub fn train_cmd(config_path: &Path, out: &Path, o: &Overrides) -> Result<(), CliError> {
    let mut cfg: ExperimentConfig = config::load(config_path)?;
    apply_overrides(&mut cfg, o);
    cfg.train.validate()?;
    let (train_set, test_set) = split_dataset(&cfg, config_path)?;
    let net = init_network(&network_spec(&cfg, &train_set), cfg.train.seed)?;

    let (trained, metrics) = train(&net, &train_set, &test_set, &cfg.train)?;

    let dir = create_run_dir(out, &format!("train-{}-s{}", cfg.model, cfg.train.seed))?;
    write_json(&dir.join("config.json"), &cfg)?;
    save_checkpoint(&trained, &dir.join("checkpoint.json"))?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    write_file(&dir.join("metrics.csv"), metrics.to_csv())?;

    for e in &metrics.epochs {
        println!(
            "epoch {:>3}  train loss {:.4} acc {:.3}  test loss {:.4} acc {:.3}",
            e.epoch, e.train_loss, e.train_accuracy, e.test_loss, e.test_accuracy
        );
    }
    println!("model: {}", cfg.model);
    println!(
        "final_test_accuracy: {}",
        metrics.final_test_accuracy().unwrap_or(f64::NAN)
    );
    println!("test_spike_counts: {}", join(&metrics.test_spike_counts));
    println!("run_dir: {}", dir.display());
    Ok(())
}

fn max_readout_deviation(a: &Network, b: &Network, inputs: &SpikeTensor) -> Result<f64, CliError> {
    let ra = forward_record(a, inputs)?.readout;
    let rb = forward_record(b, inputs)?.readout;
    Ok(ra
        .data()
        .iter()
        .zip(rb.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

pub fn eval_cmd(checkpoint: &Path, config_path: &Path, merge: bool) -> Result<(), CliError> {
    let cfg: ExperimentConfig = config::load(config_path)?;
    let (_, test_set) = split_dataset(&cfg, config_path)?;
    let original = load_checkpoint(checkpoint)?;
    check_fits(&original, &test_set)?;

    let net = if merge { merge_beta(&original) } else { original.clone() };
    let eval = evaluate(&net, &test_set, cfg.train.batch_size)?;
    println!("accuracy: {}", eval.accuracy);
    println!("loss: {}", eval.loss);
    println!("spike_counts: {}", join(&eval.spike_counts));
    if merge {
        println!("parameters: {} -> {}", original.param_count(), net.param_count());
        println!(
            "max_readout_deviation: {:e}",
            max_readout_deviation(&original, &net, &test_set.inputs)?
        );
    }
    Ok(())
}

/// Deterministic gradcheck network: weights enlarged so units cross
/// threshold, and `beta`/`plif_raw` moved off their initial values.
fn gradcheck_case(cfg: &GradcheckConfig, model: NeuronModel) -> Result<(Network, SpikeTensor, Vec<usize>), CliError> {
    let mut widths = cfg.hidden.clone();
    widths.push(cfg.classes);
    let mut net = init_network(
        &NetworkSpec::uniform(cfg.input_width, &widths, model, cfg.timesteps),
        cfg.seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
    for layer in &mut net.layers {
        for w in layer.w.data_mut() {
            *w *= 1.5;
        }
        if let Some(b) = &mut layer.beta {
            for v in &mut b.beta {
                *v = rng.random_range(0.5..1.5);
            }
        }
        if model == NeuronModel::Plif {
            layer.neuron.plif_raw = rng.random_range(-1.0..1.0);
        }
    }
    let data = (0..cfg.batch * cfg.input_width * cfg.timesteps)
        .map(|_| if rng.random::<f64>() < cfg.input_rate { 1.0 } else { 0.0 })
        .collect();
    let input = SpikeTensor::new(cfg.batch, cfg.input_width, cfg.timesteps, data)?;
    let labels = (0..cfg.batch).map(|b| b % cfg.classes).collect();
    Ok((net, input, labels))
}

pub fn gradcheck_cmd(config_path: Option<&Path>, o: &Overrides, corrupt: bool) -> Result<(), CliError> {
    let mut cfg: GradcheckConfig = match config_path {
        Some(p) => config::load(p)?,
        None => GradcheckConfig::default(),
    };
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if cfg.classes == 0 || cfg.batch == 0 || !(0.0..=1.0).contains(&cfg.input_rate) {
        return Err(CliError::Usage(
            "gradcheck needs classes >= 1, batch >= 1, input_rate in [0, 1]".into(),
        ));
    }
    let opts = GradcheckOptions {
        step: cfg.step,
        tolerance: cfg.tolerance,
    };
    let models: Vec<NeuronModel> = match o.model {
        Some(m) => vec![m],
        None => NeuronModel::ALL.to_vec(),
    };

    let mut failures = Vec::new();
    println!("model\ttensor\tmax_rel_error\tstatus");
    for model in models {
        let (net, input, labels) = gradcheck_case(&cfg, model)?;
        let report = gradcheck_with(&net, &input, &labels, opts, |tape, up, net| {
            let mut g = backward(tape, up, net)?;
            if corrupt {
                // test fixture: a backward that is wrong by 5% on the first layer
                for v in g.layers[0].dw.data_mut() {
                    *v *= 1.05;
                }
            }
            Ok(g)
        })?;
        print!("{report}");
        for e in report.entries.iter().filter(|e| !e.passed) {
            failures.push(format!(
                "{model} {}: rel error {:.3e} at index {} (analytic {:e}, numeric {:e})",
                e.name, e.max_rel_error, e.worst_index, e.analytic, e.numeric
            ));
        }
    }
    if failures.is_empty() {
        println!("gradcheck passed at tolerance {:e}", cfg.tolerance);
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "gradcheck failed:\n  {}",
            failures.join("\n  ")
        )))
    }
}

pub fn analyze_cmd(a: &Path, b: &Path, config_path: &Path, out: &Path, bins: usize) -> Result<(), CliError> {
    let cfg: ExperimentConfig = config::load(config_path)?;
    let (_, test_set) = split_dataset(&cfg, config_path)?;
    let net_a = load_checkpoint(a)?;
    let net_b = load_checkpoint(b)?;
    check_fits(&net_a, &test_set)?;
    check_fits(&net_b, &test_set)?;

    let shift = weight_shift_report(&net_a, &net_b, &default_bin_edges(&net_a, &net_b, bins))?;
    let spikes = spike_comparison_csv(
        &spike_count_report(&net_a, &test_set)?,
        &spike_count_report(&net_b, &test_set)?,
    )?;

    let dir = create_run_dir(out, "analyze")?;
    write_file(&dir.join("weight_shift.csv"), shift.to_csv())?;
    write_file(&dir.join("spike_counts.csv"), &spikes)?;
    print!("{spikes}");
    println!("weights: {} per model, {} bins", shift.total_weights, shift.bins.len());
    println!("run_dir: {}", dir.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct SampleEntry {
    source: Option<PathBuf>,
    label: usize,
}

#[derive(Debug, Serialize)]
struct DatasetManifest {
    cache: String,
    params_hash: String,
    params: GenDataConfig,
    class_count: usize,
    neurons: usize,
    timesteps: usize,
    per_class: Vec<usize>,
    skipped_empty: usize,
    samples: Vec<SampleEntry>,
}

pub fn gen_data_cmd(config_path: &Path, out: &Path, o: &Overrides) -> Result<(), CliError> {
    let mut cfg: GenDataConfig = config::load(config_path)?;
    let mut skipped = 0;
    let (ds, sources) = match &mut cfg {
        GenDataConfig::Poisson(p) => {
            if let Some(seed) = o.seed {
                p.seed = seed;
            }
            let ds = gen_poisson_patterns(p)?;
            let n = ds.len();
            (ds, vec![None; n])
        }
        GenDataConfig::Events(ev) => {
            let streams = load_manifest(&config::resolve(config_path, &ev.manifest))?;
            let mut tensors = Vec::new();
            let mut labels = Vec::new();
            let mut sources = Vec::new();
            for s in streams {
                if s.events.is_empty() {
                    skipped += 1;
                    continue;
                }
                tensors.push(bin_events(&s.events, &ev.binning)?);
                labels.push(s.label);
                sources.push(Some(s.path));
            }
            if tensors.is_empty() {
                return Err(CliError::Usage("no sample in the manifest contains events".into()));
            }
            let classes = ev
                .class_count
                .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
            let ds = Dataset::new(SpikeTensor::stack(&tensors)?, labels, classes, Split::All)?;
            (ds, sources)
        }
    };
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} sample(s) without events");
    }

    let hash = binning_hash(&cfg)?;
    let dir = create_run_dir(out, "data")?;
    save_cache(&dir.join("dataset.bin"), &ds, &hash)?;
    let mut per_class = vec![0; ds.class_count];
    for &l in &ds.labels {
        per_class[l] += 1;
    }
    let manifest = DatasetManifest {
        cache: "dataset.bin".into(),
        params_hash: hex(&hash),
        params: cfg,
        class_count: ds.class_count,
        neurons: ds.inputs.neurons(),
        timesteps: ds.inputs.timesteps(),
        per_class: per_class.clone(),
        skipped_empty: skipped,
        samples: sources
            .into_iter()
            .zip(&ds.labels)
            .map(|(source, &label)| SampleEntry { source, label })
            .collect(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;

    println!(
        "samples: {} in {} classes (per class {}), {} neurons x {} steps",
        ds.len(),
        ds.class_count,
        join(&per_class),
        ds.inputs.neurons(),
        ds.inputs.timesteps()
    );
    println!("skipped_empty: {skipped}");
    println!("params_hash: {}", hex(&hash));
    println!("run_dir: {}", dir.display());
    Ok(())
}
