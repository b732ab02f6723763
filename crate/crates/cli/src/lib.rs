//! Command implementations behind the `ptnn` binary.
//!
//! JSON goes to the writer handed to [`execute`] (stdout in the binary);
//! diagnostics go to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ptnn_core::model_store::{BundleDescriptor, DatasetRef};
use ptnn_core::ptnn_engine::{decompose_layer, parse_jsonl, LayerAttempt};
use ptnn_core::{
    compress_each_layer, generate_toy_bundle, layer_metrics, load_bundle, load_tt_checkpoint,
    model_metrics, run, save_bundle, save_tt_checkpoint, GateConfig, LayerMetrics, ModelBundle,
    ModelMetrics, SigmaRule, ToyConfig, ToyDataset, TraceLine,
};
use serde::Serialize;

/// Exit status for a layer whose volume cannot be folded into a tensor.
pub const EXIT_UNFACTORABLE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ptnn",
    version,
    about = "Tensor-train compression of model weights"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GateArgs {
    /// Relative error bound for each TT-SVD.
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// Number of tensor modes to fold each weight matrix into.
    #[arg(long, default_value_t = 4)]
    pub d_target: usize,
    /// Truncation constant: `paper` (ε/(d−1)) or `standard` (ε/√(d−1)).
    #[arg(long, default_value = "paper")]
    pub sigma_rule: SigmaRule,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose one layer of a bundle into a TT checkpoint.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        layer: String,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        gate: GateArgs,
    },
    /// Rebuild the dense matrix stored in a TT checkpoint.
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        /// Bundle file receiving the dense matrix.
        #[arg(long)]
        output: PathBuf,
        /// Tensor name inside the output bundle.
        #[arg(long, default_value = "weight")]
        name: String,
    },
    /// Accuracy-gated compression of a whole toy bundle.
    CompressModel {
        #[arg(long)]
        input: PathBuf,
        /// Directory for bundle.ptw, checkpoints/ and trace.jsonl; must be new or empty.
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        gate: GateArgs,
        /// Absolute accuracy drop allowed against the original model.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        /// Comma-separated layer order (default: bundle order).
        #[arg(long, value_delimiter = ',')]
        layers: Vec<String>,
    },
    /// Compress each layer alone from the pristine bundle and score it.
    Individual {
        #[arg(long)]
        input: PathBuf,
        /// Optional JSON-lines file for the per-layer records.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        gate: GateArgs,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        #[arg(long, value_delimiter = ',')]
        layers: Vec<String>,
    },
    /// Generate the deterministic teacher–student toy bundle.
    GenerateToy {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Weight tensors in total (embedding, hidden blocks, output).
        #[arg(long, default_value_t = 4)]
        n_layers: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long)]
        planted_rank: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Render a trace file as a table with an aggregate line.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

impl GateArgs {
    fn config(&self, tolerance: f64, layers: &[String]) -> GateConfig {
        GateConfig {
            epsilon: self.epsilon,
            accuracy_drop_tolerance: tolerance,
            d_target: self.d_target,
            layer_order: layers.to_vec(),
            sigma_rule: self.sigma_rule,
            ..GateConfig::default()
        }
    }
}

#[derive(Serialize)]
struct CompressSummary<'a> {
    original_accuracy: f64,
    final_accuracy: f64,
    output: &'a Path,
    #[serde(flatten)]
    metrics: &'a ModelMetrics,
}

#[derive(Serialize)]
struct ReconstructSummary<'a> {
    output: &'a Path,
    rows: usize,
    cols: usize,
    ranks: &'a [usize],
    epsilon_used: f64,
    tt_params: usize,
}

#[derive(Serialize)]
struct ToySummary<'a> {
    output: &'a Path,
    seed: u64,
    tensors: Vec<&'a str>,
    total_params: usize,
    accuracy: f64,
}

fn emit(out: &mut dyn Write, value: &impl Serialize) -> anyhow::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Runs one subcommand and returns the process exit status.
pub fn execute(cli: Cli, out: &mut dyn Write) -> anyhow::Result<i32> {
    match cli.command {
        Command::Decompose {
            input,
            layer,
            output,
            gate,
        } => decompose(&input, &layer, &output, &gate, out),
        Command::Reconstruct {
            input,
            output,
            name,
        } => reconstruct(&input, &output, &name, out),
        Command::CompressModel {
            input,
            output,
            gate,
            tolerance,
            layers,
        } => compress_model(&input, &output, &gate.config(tolerance, &layers), out),
        Command::Individual {
            input,
            output,
            gate,
            tolerance,
            layers,
        } => individual(
            &input,
            output.as_deref(),
            &gate.config(tolerance, &layers),
            out,
        ),
        Command::GenerateToy {
            output,
            seed,
            n_layers,
            width,
            classes,
            samples,
            planted_rank,
            noise,
        } => {
            let mut config = ToyConfig::new(seed, n_layers, width, classes);
            config.n_samples = samples;
            if let Some(r) = planted_rank {
                config.planted_rank = r;
            }
            if let Some(a) = noise {
                config.noise_amplitude = a;
            }
            generate_toy(&config, &output, out)
        }
        Command::Report { input } => report(&input, out),
    }
}

fn decompose(
    input: &Path,
    layer: &str,
    output: &Path,
    gate: &GateArgs,
    out: &mut dyn Write,
) -> anyhow::Result<i32> {
    let bundle = load_bundle(input)?;
    let tensor = bundle
        .get(layer)
        .with_context(|| format!("{}: no layer named {layer:?}", input.display()))?;
    let config = gate.config(0.0, &[]);
    match decompose_layer(tensor, &config)? {
        LayerAttempt::Unfactorable => {
            eprintln!(
                "{layer}: volume {} cannot be folded into a tensor; layer left dense",
                tensor.len()
            );
            Ok(EXIT_UNFACTORABLE)
        }
        LayerAttempt::Decomposed {
            plan,
            cores,
            relative_error,
            ..
        } => {
            save_tt_checkpoint(&cores, &plan, output)?;
            emit(
                out,
                &layer_metrics(layer, tensor.len(), &cores, relative_error),
            )?;
            Ok(0)
        }
    }
}

fn reconstruct(
    input: &Path,
    output: &Path,
    name: &str,
    out: &mut dyn Write,
) -> anyhow::Result<i32> {
    let (cores, plan) = load_tt_checkpoint(input)?;
    let dense = cores
        .reconstruct()
        .into_shape(vec![plan.original_rows, plan.original_cols])?;
    let mut bundle = ModelBundle::new(BundleDescriptor::default());
    bundle.push(name, dense)?;
    save_bundle(&bundle, output)?;
    emit(
        out,
        &ReconstructSummary {
            output,
            rows: plan.original_rows,
            cols: plan.original_cols,
            ranks: cores.ranks(),
            epsilon_used: cores.epsilon_used(),
            tt_params: cores.param_count(),
        },
    )?;
    Ok(0)
}

fn oracle_for(bundle: &ModelBundle, path: &Path) -> anyhow::Result<ToyDataset> {
    ToyDataset::for_bundle(bundle).with_context(|| {
        format!(
            "{}: bundle carries no toy dataset to score against",
            path.display()
        )
    })
}

/// Sibling staging directory that replaces `output` only on success.
fn staging_dir(output: &Path) -> anyhow::Result<PathBuf> {
    if output.exists() {
        let mut entries = fs::read_dir(output)
            .with_context(|| format!("{}: output must be a directory", output.display()))?;
        if entries.next().is_some() {
            bail!("{}: output directory is not empty", output.display());
        }
    }
    let name = output
        .file_name()
        .with_context(|| format!("{}: output needs a directory name", output.display()))?;
    let mut staged = name.to_os_string();
    staged.push(format!(".partial-{}", std::process::id()));
    Ok(output.with_file_name(staged))
}

fn write_outputs(dir: &Path, result: &ptnn_core::EngineOutput) -> anyhow::Result<()> {
    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).with_context(|| ckpt_dir.display().to_string())?;
    save_bundle(&result.bundle, dir.join("bundle.ptw"))?;
    for accepted in &result.checkpoints {
        let path = ckpt_dir.join(format!("{}.pttt", accepted.name));
        save_tt_checkpoint(&accepted.cores, &accepted.plan, path)?;
    }
    let trace = dir.join("trace.jsonl");
    fs::write(&trace, result.trace.to_jsonl()).with_context(|| trace.display().to_string())?;
    Ok(())
}

fn compress_model(
    input: &Path,
    output: &Path,
    config: &GateConfig,
    out: &mut dyn Write,
) -> anyhow::Result<i32> {
    let bundle = load_bundle(input)?;
    let data = oracle_for(&bundle, input)?;
    let result = run(&bundle, &data, config)?;
    let metrics = model_metrics(result.trace.metrics(), bundle.total_params())?;

    let staged = staging_dir(output)?;
    let written = write_outputs(&staged, &result).and_then(|()| {
        if output.exists() {
            fs::remove_dir(output).with_context(|| output.display().to_string())?;
        }
        fs::rename(&staged, output).with_context(|| output.display().to_string())
    });
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&staged);
        return Err(e);
    }
    emit(
        out,
        &CompressSummary {
            original_accuracy: result.trace.original_accuracy,
            final_accuracy: result.trace.final_accuracy,
            output,
            metrics: &metrics,
        },
    )?;
    Ok(0)
}

fn individual(
    input: &Path,
    output: Option<&Path>,
    config: &GateConfig,
    out: &mut dyn Write,
) -> anyhow::Result<i32> {
    let bundle = load_bundle(input)?;
    let data = oracle_for(&bundle, input)?;
    let traces = compress_each_layer(&bundle, config, &data)?;
    let lines: Vec<TraceLine> = traces.iter().flat_map(|t| t.lines()).collect();
    let text = ptnn_core::ptnn_engine::write_jsonl(&lines);
    if let Some(path) = output {
        fs::write(path, &text).with_context(|| path.display().to_string())?;
    }
    out.write_all(text.as_bytes())?;
    Ok(0)
}

fn generate_toy(config: &ToyConfig, output: &Path, out: &mut dyn Write) -> anyhow::Result<i32> {
    let (bundle, data) = generate_toy_bundle(config)?;
    save_bundle(&bundle, output)?;
    let DatasetRef { seed, .. } = bundle
        .descriptor()
        .dataset
        .clone()
        .expect("toy bundles carry a dataset reference");
    emit(
        out,
        &ToySummary {
            output,
            seed,
            tensors: bundle.names().collect(),
            total_params: bundle.total_params(),
            accuracy: ptnn_core::evaluate(&bundle, &data)?,
        },
    )?;
    Ok(0)
}

/// Text table over trace lines plus an aggregate recomputed from them.
pub fn render_report(lines: &[TraceLine]) -> anyhow::Result<String> {
    let metrics: Vec<LayerMetrics> = lines.iter().map(TraceLine::to_metrics).collect();
    let total = lines.iter().map(|l| l.original_params).sum();
    let mm = model_metrics(metrics, total)?;

    let header = [
        "layer",
        "decision",
        "pre_acc",
        "post_acc",
        "params",
        "tt_params",
        "saving",
        "ranks",
    ];
    let mut rows: Vec<[String; 8]> = vec![header.map(String::from)];
    for l in lines {
        rows.push([
            l.layer.clone(),
            l.decision.to_string(),
            format!("{:.4}", l.pre_acc),
            format!("{:.4}", l.post_acc),
            l.original_params.to_string(),
            l.compressed_params.to_string(),
            format!("{:.4}", l.space_saving),
            format!("{:?}", l.ranks),
        ]);
    }
    let mut widths = [0usize; 8];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut text = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(widths)
            .enumerate()
            // names and decisions left-aligned, numbers right-aligned
            .map(|(i, (cell, w))| {
                if i < 2 || i == 7 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        text.push_str(cells.join("  ").trim_end());
        text.push('\n');
    }
    text.push_str(&format!(
        "aggregate: {} layers, {} compressed, params {} -> {}, space saving {:.4}, model fraction saved {:.4}\n",
        mm.layers.len(),
        mm.compressed_layer_count(),
        mm.total_params,
        mm.params_after(),
        mm.aggregate_space_saving,
        mm.model_memory_fraction_saved,
    ));
    Ok(text)
}

fn report(input: &Path, out: &mut dyn Write) -> anyhow::Result<i32> {
    let text = fs::read_to_string(input).with_context(|| input.display().to_string())?;
    let lines = parse_jsonl(&text).with_context(|| input.display().to_string())?;
    out.write_all(render_report(&lines)?.as_bytes())?;
    Ok(0)
}
