use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use advexplain::attribution::{attribute_path, integrated_gradients, random_attribution, saliency_map};
use advexplain::cli::{
    format_table, heatmap_pgm, read_pnm, report, run_experiment, synthetic_blobs, BlobSpec, Dataset,
    DatasetSource, ExperimentConfig, Method, SweepAxis,
};
use advexplain::model::{load_model, save_model, train_with_history, DifferentiableModel, ModelKind, ModelSpec, Network};
use advexplain::numerics::{read_tensor, write_tensor};
use advexplain::strategies::StrategyId;
use advexplain::{Error, Result, Rng, Tensor};

#[derive(Parser)]
#[command(name = "advexplain", version, about = "Attribution along adversarial-attack paths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic Gaussian-blob dataset as PGM files plus labels.csv.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 40)]
        per_class: usize,
        #[arg(long, default_value_t = 16)]
        side: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train a classifier with full-batch gradient descent.
    Train {
        /// Dataset directory or `synthetic:classes=..,per_class=..,side=..,seed=..`.
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "mlp-relu")]
        kind: String,
        /// Hidden widths for the MLP, comma separated.
        #[arg(long, default_value = "64,32", value_delimiter = ',')]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Attribute one image and write the map as a tensor file.
    Attribute {
        #[arg(long)]
        model: PathBuf,
        /// PGM/PPM image or tensor file.
        #[arg(long)]
        image: PathBuf,
        /// Class to explain; defaults to the model's prediction.
        #[arg(long)]
        label: Option<usize>,
        #[command(flatten)]
        attack: AttackArgs,
        #[arg(long)]
        out: PathBuf,
        /// Optional greyscale heatmap of the map.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// Insertion/deletion evaluation over a dataset (no sweep).
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a configured sweep.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Sweep axis: seed, dp, epsilon, beta, rho or none.
        #[arg(long)]
        axis: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Summarize a results CSV into tables and sweep charts.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Perturbation budget in 0..255 pixel units.
    #[arg(long)]
    eps: Option<f32>,
    #[arg(long)]
    dp: Option<f32>,
    #[arg(long)]
    rho: Option<f32>,
    #[arg(long)]
    sigma: Option<f32>,
    #[arg(long)]
    beta: Option<f32>,
    #[arg(long)]
    steps: Option<usize>,
    /// Strategy ids, comma separated, or `all`.
    #[arg(long, value_delimiter = ',')]
    strategy: Option<Vec<String>>,
    /// Methods (path, ig, saliency, random), comma separated.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    attack: AttackArgs,
    #[arg(long)]
    eval_steps: Option<usize>,
    /// zero or blur
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    heatmaps: bool,
}

impl AttackArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        let a = &mut cfg.attack;
        if let Some(v) = self.seed {
            a.seed = v;
        }
        if let Some(v) = self.eps {
            a.eps = v;
        }
        if let Some(v) = self.dp {
            a.dp = v;
        }
        if let Some(v) = self.rho {
            a.rho = v;
        }
        if let Some(v) = self.sigma {
            a.sigma = v;
        }
        if let Some(v) = self.beta {
            a.beta = v;
        }
        if let Some(v) = self.steps {
            a.steps = v;
        }
        if let Some(ids) = &self.strategy {
            cfg.strategies = if ids.iter().any(|s| s == "all") {
                StrategyId::ALL.to_vec()
            } else {
                ids.iter().map(|s| s.parse()).collect::<Result<_>>()?
            };
        }
        if let Some(ms) = &self.method {
            cfg.methods = ms.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        Ok(())
    }
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        self.attack.apply(&mut cfg)?;
        if let Some(v) = self.eval_steps {
            cfg.eval_steps = v;
        }
        if let Some(v) = &self.baseline {
            cfg.baseline = v.parse()?;
        }
        if let Some(v) = self.limit {
            cfg.limit = Some(v);
        }
        if let Some(v) = &self.out {
            cfg.output = v.clone();
        }
        cfg.heatmaps |= self.heatmaps;
        Ok(cfg)
    }
}

fn load_image(path: &Path) -> Result<Tensor> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm" | "ppm" | "pnm") => read_pnm(path),
        _ => read_tensor(path),
    }
}

fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    let mut correct = 0;
    for s in &data.samples {
        if net.predict(&s.image)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn finish_run(cfg: &ExperimentConfig) -> Result<()> {
    let out = run_experiment(cfg)?;
    let path = out.results_path.expect("results written");
    let rep = report(&path, &cfg.output)?;
    print!("{}", format_table(&rep.table));
    if out.failures > 0 {
        eprintln!("{} rows failed (see log)", out.failures);
    }
    println!("results: {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { out, classes, per_class, side, seed } => {
            let data = synthetic_blobs(&BlobSpec { classes, per_class, side, seed })?;
            data.save_dir(&out)?;
            println!("wrote {} images to {}", data.len(), out.display());
        }
        Command::Train { data, out, kind, hidden, lr, epochs, seed } => {
            let data = Dataset::load(&data.parse::<DatasetSource>()?)?;
            let shape = data.image_shape().ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
            let input_dim = shape.iter().product();
            let classes = data.samples.iter().map(|s| s.label).max().unwrap_or(0) + 1;
            let spec = match kind.parse::<ModelKind>()? {
                ModelKind::LinearSoftmax => ModelSpec::linear(input_dim, classes),
                ModelKind::MlpRelu => ModelSpec::mlp(input_dim, &hidden, classes),
            };
            let (weights, history) = train_with_history(&spec, &data.pairs(), lr, epochs, seed)?;
            let net = Network::new(spec, weights)?;
            save_model(&out, &net)?;
            println!(
                "loss {:.4} -> {:.4}, training accuracy {:.3}; model written to {}",
                history[0],
                history[history.len() - 1],
                accuracy(&net, &data)?,
                out.display()
            );
        }
        Command::Attribute { model, image, label, attack, out, heatmap } => {
            let net = load_model(&model)?;
            let x = load_image(&image)?;
            let mut cfg = ExperimentConfig::default();
            attack.apply(&mut cfg)?;
            let pred = net.forward(&x)?;
            let y = label.unwrap_or(pred.label);
            let method = cfg.methods[0];
            let map = match method {
                Method::Path => {
                    let (map, trace) = attribute_path(&net, &x, y, cfg.strategies[0], &cfg.attack)?;
                    info!("success step: {:?}", trace.success_step);
                    map
                }
                Method::Ig => integrated_gradients(
                    &net,
                    &x,
                    y,
                    &Tensor::zeros(x.shape()),
                    cfg.attack.ig_steps,
                    cfg.ig_objective,
                )?,
                Method::Saliency => saliency_map(&net, &x, y)?,
                Method::Random => random_attribution(x.shape(), &mut Rng::new(cfg.attack.seed))?,
            };
            write_tensor(&out, &map.values)?;
            if let Some(h) = heatmap {
                std::fs::write(&h, heatmap_pgm(&map.values)?)
                    .map_err(|e| Error::Io { path: h.clone(), source: e })?;
            }
            println!("explained class {y}; map written to {}", out.display());
        }
        Command::Evaluate { model, data, run } => {
            let mut cfg = run.config()?;
            if let Some(m) = model {
                cfg.model = m;
            }
            if let Some(d) = data {
                cfg.dataset = d.parse()?;
            }
            cfg.sweep_axis = SweepAxis::None;
            finish_run(&cfg)?;
        }
        Command::Sweep { run, axis, values } => {
            let mut cfg = run.config()?;
            if let Some(a) = axis {
                cfg.sweep_axis = a.parse()?;
            }
            if let Some(v) = values {
                cfg.sweep_values = v;
            }
            finish_run(&cfg)?;
        }
        Command::Report { results, out } => {
            let rep = report(&results, &out)?;
            print!("{}", format_table(&rep.table));
            for f in &rep.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
