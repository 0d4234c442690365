//! Command-line front end: dataset generation, embedding fits (free
//! particles or the trained mapper), transforming unseen data, metric
//! reports, and SVG scatter rendering.

mod config;
mod plot;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use glomap::data::{self, DataMatrix, LabelColumn, Seed};
use glomap::inductive::{fit_inductive_with, transform};
use glomap::metrics::{
    distance_correlation_sampled, dtm_kl, knn_accuracy_sweep, silhouette, trustworthiness,
    MetricReport,
};
use glomap::mlp::Mapper;
use glomap::transductive::{fit_transductive_with, Embedding, FitInput};

use config::{parse_int_grid, parse_sigma_grid, RunConfig};

#[derive(Parser)]
#[command(name = "glomap", version, about = "Global and local manifold learning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate one of the built-in synthetic datasets as CSV.
    Generate {
        /// scurve | severed | eggs | hierarchical | spheres
        #[arg(long)]
        dataset: String,
        /// Number of points (dataset-specific default; eggs is fixed-size).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed a dataset and write the embedding, checkpoints and loss curve.
    Fit {
        /// Input dataset CSV.
        #[arg(long)]
        input: Option<PathBuf>,
        /// glomap (free particles) | iglomap (trained mapper)
        #[arg(long)]
        method: Option<String>,
        /// Config file providing defaults for any flag not given here.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        k_tilde: Option<usize>,
        #[arg(long)]
        lambda_e: Option<f64>,
        #[arg(long)]
        tau_start: Option<f64>,
        #[arg(long)]
        tau_end: Option<f64>,
        #[arg(long)]
        fixed_tau: Option<f64>,
        #[arg(long)]
        alpha0: Option<f64>,
        #[arg(long)]
        alpha_decay: Option<f64>,
        #[arg(long)]
        clip: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        neg_approx: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Map unseen rows through a trained mapper file.
    Transform {
        #[arg(long)]
        mapper: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute quality metrics of an embedding against its reference data.
    Evaluate {
        #[arg(long)]
        embedding: PathBuf,
        /// The dataset the embedding was fit on (labels and/or generating
        /// coordinates supply the ground truth).
        #[arg(long)]
        reference: PathBuf,
        /// Comma list: knn, trustworthiness, silhouette, dtm_kl, distcorr.
        /// Default: everything the reference columns support.
        #[arg(long)]
        metrics: Option<String>,
        /// K values for the knn sweep, `lo:hi` or comma list.
        #[arg(long)]
        knn_grid: Option<String>,
        /// Length scales for dtm_kl, `lo:hi:count` (log-spaced) or comma list.
        #[arg(long)]
        sigma_grid: Option<String>,
        #[arg(long, default_value_t = 5)]
        trust_k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an embedding CSV (or a directory of checkpoints) as SVG.
    Plot {
        /// One embedding CSV.
        #[arg(long, conflicts_with = "checkpoints")]
        input: Option<PathBuf>,
        /// Directory of epoch_*.csv checkpoints; one panel per file.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// `label:NAME`, `coord:0`, `coord:1` or `none`.
        #[arg(long)]
        color: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    glomap::configure_threads_from_env();
    match Cli::parse().cmd {
        Cmd::Generate { dataset, n, seed, out } => cmd_generate(&dataset, n, seed, &out),
        Cmd::Fit {
            input,
            method,
            config,
            out,
            epochs,
            batch,
            k,
            k_tilde,
            lambda_e,
            tau_start,
            tau_end,
            fixed_tau,
            alpha0,
            alpha_decay,
            clip,
            dim,
            neg_approx,
            seed,
            checkpoint_every,
        } => {
            let mut cfg = match config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::default(),
            };
            if let Some(v) = input {
                cfg.input = Some(v.display().to_string());
            }
            if let Some(v) = method {
                cfg.method = v;
            }
            if let Some(v) = out {
                cfg.out = Some(v.display().to_string());
            }
            if let Some(v) = epochs {
                cfg.fit.n_epoch = v;
            }
            if let Some(v) = batch {
                cfg.fit.batch = v;
            }
            if let Some(v) = k {
                cfg.fit.k = v;
            }
            if let Some(v) = k_tilde {
                cfg.fit.k_tilde = Some(v);
            }
            if let Some(v) = lambda_e {
                cfg.fit.lambda_e = v;
            }
            if let Some(v) = tau_start {
                cfg.fit.tau_start = v;
            }
            if let Some(v) = tau_end {
                cfg.fit.tau_end = v;
            }
            if let Some(v) = fixed_tau {
                cfg.fit.fixed_tau = Some(v);
            }
            if let Some(v) = alpha0 {
                cfg.fit.alpha0 = v;
            }
            if let Some(v) = alpha_decay {
                cfg.fit.alpha_decay = v;
            }
            if let Some(v) = clip {
                cfg.fit.clip = v;
            }
            if let Some(v) = dim {
                cfg.fit.dim = v;
            }
            if neg_approx {
                cfg.fit.neg_approx = true;
            }
            if let Some(v) = seed {
                cfg.fit.seed = v;
            }
            if let Some(v) = checkpoint_every {
                cfg.checkpoint_every = v;
            }
            cmd_fit(&cfg)
        }
        Cmd::Transform { mapper, input, out } => cmd_transform(&mapper, &input, &out),
        Cmd::Evaluate { embedding, reference, metrics, knn_grid, sigma_grid, trust_k, out } => {
            cmd_evaluate(
                &embedding,
                &reference,
                metrics.as_deref(),
                knn_grid.as_deref(),
                sigma_grid.as_deref(),
                trust_k,
                &out,
            )
        }
        Cmd::Plot { input, checkpoints, color, out } => {
            cmd_plot(input.as_deref(), checkpoints.as_deref(), color.as_deref(), &out)
        }
    }
}

fn cmd_generate(dataset: &str, n: Option<usize>, seed: u64, out: &Path) -> Result<()> {
    let m = match dataset {
        "scurve" => data::gen_scurve(n.unwrap_or(6000), Seed(seed)),
        "severed" => data::gen_severed_sphere(n.unwrap_or(6000), Seed(seed)),
        "eggs" => {
            if n.is_some() {
                bail!("the eggs dataset has a fixed size; drop --n");
            }
            data::gen_eggs(Seed(seed))
        }
        "hierarchical" => {
            let total = n.unwrap_or(6000);
            if total % 125 != 0 {
                bail!("hierarchical needs --n divisible by 125 (125 leaf clusters)");
            }
            data::gen_hierarchical(total / 125, Seed(seed))
        }
        "spheres" => data::gen_spheres(n.unwrap_or(10000), Seed(seed))?,
        other => bail!("unknown dataset {other:?} (scurve|severed|eggs|hierarchical|spheres)"),
    };
    std::fs::create_dir_all(out)?;
    data::save_matrix(out.join("data.csv"), &m)?;
    let mut cfg = RunConfig::default();
    cfg.dataset = Some(dataset.to_string());
    cfg.n = Some(m.n());
    cfg.fit.seed = seed;
    cfg.out = Some(out.display().to_string());
    cfg.save(out.join("run_config.txt"))?;
    println!("wrote {} ({} x {})", out.join("data.csv").display(), m.n(), m.p());
    Ok(())
}

/// Embedding rows plus the reference's labels and coordinates, so metric and
/// plot runs are self-contained.
fn embedding_with_refs(z: &Embedding, source: &DataMatrix) -> DataMatrix {
    DataMatrix {
        points: z.clone(),
        labels: source.labels.clone(),
        coords2d: source.coords2d.clone(),
    }
}

fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let input = cfg.input.as_ref().ok_or_else(|| anyhow!("fit needs --input"))?;
    let out = PathBuf::from(cfg.out.as_ref().ok_or_else(|| anyhow!("fit needs --out"))?);
    let m = data::load_matrix(input).with_context(|| format!("reading {input}"))?;
    std::fs::create_dir_all(out.join("checkpoints"))?;
    cfg.save(out.join("run_config.txt"))?;

    let every = cfg.checkpoint_every.max(1);
    let mut losses: Vec<f64> = Vec::new();
    let checkpoint = |epoch: usize, z: &Embedding| -> Result<()> {
        if (epoch + 1) % every == 0 {
            let path = out.join("checkpoints").join(format!("epoch_{:04}.csv", epoch + 1));
            data::save_matrix(path, &embedding_with_refs(z, &m))?;
        }
        Ok(())
    };

    let embedding = match cfg.method.as_str() {
        "glomap" => {
            let mut ck_err = None;
            let fit = fit_transductive_with(FitInput::Points(m.points.view()), &cfg.fit, |e, z, l| {
                println!("epoch {:4}  mean stochastic loss {l:.6}", e + 1);
                losses.push(l);
                if ck_err.is_none() {
                    ck_err = checkpoint(e, z).err();
                }
            })
            .context("transductive fit")?;
            if let Some(err) = ck_err {
                return Err(err);
            }
            eprintln!(
                "stage seconds: distances {:.2}, membership {:.2}, optimize {:.2}",
                fit.timings.distance_secs, fit.timings.membership_secs, fit.timings.optimize_secs
            );
            fit.embedding
        }
        "iglomap" => {
            let mut ck_err = None;
            let fit = fit_inductive_with(&m.points.view(), &cfg.fit, |e, mapper, l| {
                println!("epoch {:4}  mean stochastic loss {l:.6}", e + 1);
                losses.push(l);
                if ck_err.is_none() && (e + 1) % every == 0 {
                    ck_err = transform(mapper, &m.points.view())
                        .map_err(anyhow::Error::from)
                        .and_then(|z| checkpoint(e, &z))
                        .err();
                }
            })
            .context("inductive fit")?;
            if let Some(err) = ck_err {
                return Err(err);
            }
            eprintln!(
                "stage seconds: distances {:.2}, membership {:.2}, optimize {:.2}",
                fit.timings.distance_secs, fit.timings.membership_secs, fit.timings.optimize_secs
            );
            fit.mapper.save(out.join("mapper.glmq"))?;
            fit.embedding
        }
        other => bail!("unknown method {other:?} (glomap|iglomap)"),
    };

    data::save_matrix(out.join("embedding.csv"), &embedding_with_refs(&embedding, &m))?;
    let loss_csv: String = std::iter::once("epoch,mean_stochastic_loss".to_string())
        .chain(losses.iter().enumerate().map(|(e, l)| format!("{},{}", e + 1, l)))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(out.join("loss_history.csv"), loss_csv + "\n")?;
    println!("wrote {}", out.join("embedding.csv").display());
    Ok(())
}

fn cmd_transform(mapper_path: &Path, input: &Path, out: &Path) -> Result<()> {
    let mapper = Mapper::load(mapper_path)
        .with_context(|| format!("loading mapper {}", mapper_path.display()))?;
    let m = data::load_matrix(input)?;
    let z = transform(&mapper, &m.points.view())?;
    std::fs::create_dir_all(out)?;
    data::save_matrix(out.join("embedding.csv"), &embedding_with_refs(&z, &m))?;
    println!("wrote {} ({} rows)", out.join("embedding.csv").display(), z.nrows());
    Ok(())
}

fn cmd_evaluate(
    embedding: &Path,
    reference: &Path,
    metrics: Option<&str>,
    knn_grid: Option<&str>,
    sigma_grid: Option<&str>,
    trust_k: usize,
    out: &Path,
) -> Result<()> {
    let emb = data::load_matrix(embedding)?;
    let rf = data::load_matrix(reference)?;
    if emb.n() != rf.n() {
        bail!("embedding has {} rows but reference has {}", emb.n(), rf.n());
    }
    let z = emb.points.view();

    let requested: Option<Vec<&str>> = metrics.map(|s| s.split(',').map(str::trim).collect());
    let explicit = requested.is_some();
    let wants = |name: &str| requested.as_ref().map_or(true, |r| r.contains(&name));
    let mut report = MetricReport::default();

    if wants("knn") {
        if rf.labels.is_empty() {
            if explicit {
                bail!("knn accuracy requested but the reference has no label: columns");
            }
        } else {
            let ks = parse_int_grid(knn_grid.unwrap_or("1:50"))?;
            for lab in &rf.labels {
                let accs = knn_accuracy_sweep(&z, &lab.values, &ks)?;
                for (k, acc) in ks.iter().zip(accs) {
                    report.push("knn_accuracy", format!("K={k};labels={}", lab.name), acc);
                }
            }
        }
    }
    if wants("trustworthiness") {
        report.push(
            "trustworthiness",
            format!("K={trust_k}"),
            trustworthiness(&rf.points.view(), &z, trust_k)?,
        );
    }
    if wants("silhouette") {
        if rf.labels.is_empty() {
            if explicit {
                bail!("silhouette requested but the reference has no label: columns");
            }
        } else {
            for lab in &rf.labels {
                report.push(
                    "silhouette",
                    format!("labels={}", lab.name),
                    silhouette(&z, &lab.values)?,
                );
            }
        }
    }
    if wants("dtm_kl") {
        match &rf.coords2d {
            None => {
                if explicit {
                    bail!("dtm_kl requested but the reference has no coord: columns");
                }
            }
            Some(c) => {
                for sigma in parse_sigma_grid(sigma_grid.unwrap_or("0.001:10:25"))? {
                    report.push(
                        "dtm_kl",
                        format!("sigma={sigma}"),
                        dtm_kl(&c.view(), &z, sigma)?,
                    );
                }
            }
        }
    }
    if wants("distcorr") {
        match &rf.coords2d {
            None => {
                if explicit {
                    bail!("distcorr requested but the reference has no coord: columns");
                }
            }
            Some(c) => {
                let (r, pairs) =
                    distance_correlation_sampled(&c.view(), &z, 18_000_000, 1)?;
                report.push("distance_correlation", format!("pairs={pairs}"), r);
            }
        }
    }

    std::fs::create_dir_all(out)?;
    report.save(out.join("metrics.csv"))?;
    for e in &report.entries {
        println!("{},{},{}", e.metric, e.param, e.value);
    }
    println!("wrote {}", out.join("metrics.csv").display());
    Ok(())
}

fn resolve_color<'a>(
    m: &'a DataMatrix,
    spec: Option<&str>,
) -> Result<(Option<&'a LabelColumn>, Option<Vec<f64>>)> {
    match spec {
        None => {
            if let Some(first) = m.labels.first() {
                Ok((Some(first), None))
            } else if let Some(c) = &m.coords2d {
                Ok((None, Some(c.column(0).to_vec())))
            } else {
                Ok((None, None))
            }
        }
        Some("none") => Ok((None, None)),
        Some(spec) => {
            if let Some(name) = spec.strip_prefix("label:") {
                let lab = m
                    .label(name)
                    .ok_or_else(|| anyhow!("no label column {name:?} in the input"))?;
                Ok((Some(lab), None))
            } else if let Some(idx) = spec.strip_prefix("coord:") {
                let idx: usize = idx.parse().context("coord index")?;
                let c = m.coords2d.as_ref().ok_or_else(|| anyhow!("input has no coord columns"))?;
                if idx >= 2 {
                    bail!("coord index must be 0 or 1");
                }
                Ok((None, Some(c.column(idx).to_vec())))
            } else {
                bail!("bad --color {spec:?} (label:NAME | coord:0 | coord:1 | none)")
            }
        }
    }
}

fn cmd_plot(
    input: Option<&Path>,
    checkpoints: Option<&Path>,
    color: Option<&str>,
    out: &Path,
) -> Result<()> {
    let mut sources: Vec<(String, DataMatrix)> = Vec::new();
    match (input, checkpoints) {
        (Some(path), None) => {
            sources.push((
                path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                data::load_matrix(path)?,
            ));
        }
        (None, Some(dir)) => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .map(|f| {
                            let f = f.to_string_lossy();
                            f.starts_with("epoch_") && f.ends_with(".csv")
                        })
                        .unwrap_or(false)
                })
                .collect();
            files.sort();
            if files.is_empty() {
                bail!("no epoch_*.csv files in {}", dir.display());
            }
            for f in files {
                let title = f
                    .file_stem()
                    .map(|s| s.to_string_lossy().replace('_', " "))
                    .unwrap_or_default();
                sources.push((title, data::load_matrix(&f)?));
            }
        }
        _ => bail!("plot needs exactly one of --input or --checkpoints"),
    }

    let mut colors = Vec::new();
    for (_, m) in &sources {
        colors.push(resolve_color(m, color)?);
    }
    let panels: Vec<plot::Panel> = sources
        .iter()
        .zip(&colors)
        .map(|((title, m), (lab, scalar))| plot::Panel {
            title: title.clone(),
            points: m.points.view(),
            color: match (lab, scalar) {
                (Some(l), _) => plot::PanelColor::Categorical(&l.values),
                (None, Some(s)) => plot::PanelColor::Scalar(s),
                (None, None) => plot::PanelColor::None,
            },
        })
        .collect();
    let svg = plot::render(&panels)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(out, svg)?;
    println!("wrote {}", out.display());
    Ok(())
}
