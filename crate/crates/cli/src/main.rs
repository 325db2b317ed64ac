use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result, bail};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde::de::DeserializeOwned;

use codeworld::analysis::{
    Chart, GainRow, SeriesStyle, correlations, fit_power_law, gain_analysis, pareto_frontier,
};
use codeworld::bench::{
    Decision, DecisionRecord, DedupConfig, DedupReport, append_decision, apply_adjudication,
    find_duplicate_clusters, read_clusters, read_decisions, sample_split, write_clusters,
};
use codeworld::datagen::{DatagenConfig, Strategy, generate_dataset, write_jsonl};
use codeworld::eval::{BenchmarkReport, EvalConfig, JudgeStatus, format_table, run_benchmark};
use codeworld::gateway::{Gateway, GatewayConfig, ResponseCache};
use codeworld::policy::{PolicyConfig, PolicyMode, PolicySample, run_policy_eval};
use codeworld::render::{
    AssetManifest, BrowserPool, PageCapture, PoolConfig, SyntheticCapture, Viewport, render_html,
};
use codeworld::review::{ReviewState, bind};
use codeworld::trajectory::{read_episodes_jsonl, read_transitions_jsonl, write_transitions_jsonl};

#[derive(Parser)]
#[command(name = "codeworld", version, about = "Code-based mobile GUI world model pipeline")]
struct Cli {
    /// Gateway configuration (endpoints, embedding providers, cache).
    #[arg(long, global = true, env = "CODEWORLD_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render HTML documents to screenshots.
    Render(RenderArgs),
    /// Build world-model SFT samples from trajectories.
    Datagen(DatagenArgs),
    /// Evaluate a world model on a benchmark.
    Eval(EvalArgs),
    /// Benchmark construction.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Single-step policy evaluation.
    PolicyEval(PolicyArgs),
    /// Scaling fits, correlations, pareto frontiers.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Serve the duplicate-cluster review UI.
    Review(ReviewArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Renderer {
    Browser,
    Synthetic,
}

#[derive(Args, Clone)]
struct RendererArgs {
    #[arg(long, value_enum, default_value = "browser")]
    renderer: Renderer,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Vendored asset manifest (TOML).
    #[arg(long)]
    assets: Option<PathBuf>,
    /// Chromium executable; discovered automatically when omitted.
    #[arg(long)]
    chrome: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    nav_timeout_secs: f64,
}

#[derive(Args)]
struct RenderArgs {
    /// JSONL with `id` and `html` per line.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "1080x2400")]
    viewport: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    renderer: RendererArgs,
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long)]
    episodes: PathBuf,
    #[arg(long)]
    frontier: String,
    #[arg(long, default_value = "ours")]
    strategy: String,
    #[arg(long, default_value = "dataset")]
    dataset: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Where annotated screenshots are written.
    #[arg(long, default_value = "work")]
    work_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    bench: PathBuf,
    #[arg(long)]
    wm: String,
    #[arg(long, value_delimiter = ',')]
    judges: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "fallback")]
    providers: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value = "work")]
    work_dir: PathBuf,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long)]
    judge_max_side: Option<u32>,
    #[command(flatten)]
    renderer: RendererArgs,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Cluster near-duplicate transitions.
    Dedup {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = codeworld::bench::DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value = "fallback")]
        provider: String,
        #[arg(long)]
        clusters: PathBuf,
    },
    /// Record one adjudication decision.
    Decide {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long)]
        cluster: String,
        #[arg(long, value_parser = ["duplicates", "distinct", "pending"])]
        decision: String,
        #[arg(long)]
        representative: Option<String>,
        #[arg(long, default_value = "cli")]
        annotator: String,
    },
    /// Drop confirmed duplicates.
    Apply {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded uniform subset.
    Sample {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    policy: String,
    #[arg(long, default_value = "oracle")]
    mode: String,
    #[arg(long)]
    wm: Option<String>,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    /// Shuffle candidates shown to the selector with this seed.
    #[arg(long)]
    shuffle: Option<u64>,
    #[arg(long, default_value = "work")]
    work_dir: PathBuf,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[command(flatten)]
    renderer: RendererArgs,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Power-law fits per series.
    Scaling {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Similarity gain scatter from an eval report.
    Gains {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Size/score pareto frontier from a CSV of name,size,score.
    Pareto {
        #[arg(long)]
        points: PathBuf,
    },
    /// Inter-judge agreement across eval reports.
    Agreement {
        #[arg(long, num_args = 1..)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct ReviewArgs {
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long)]
    decisions: PathBuf,
    #[arg(long, default_value_t = 8190)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn gateway(cli_config: Option<&Path>) -> Result<Gateway> {
    match cli_config {
        Some(p) => Ok(GatewayConfig::load(p)
            .with_context(|| format!("loading {}", p.display()))?
            .build()?),
        None => Ok(Gateway::new(ResponseCache::memory())),
    }
}

enum Capture {
    Browser(BrowserPool),
    Synthetic(SyntheticCapture),
}

impl Capture {
    async fn open(args: &RendererArgs) -> Result<Self> {
        Ok(match args.renderer {
            Renderer::Synthetic => Self::Synthetic(SyntheticCapture),
            Renderer::Browser => {
                let assets = match &args.assets {
                    Some(p) => AssetManifest::load(p).map_err(anyhow::Error::msg)?,
                    None => AssetManifest::default(),
                };
                Self::Browser(
                    BrowserPool::launch(PoolConfig {
                        executable: args.chrome.clone(),
                        workers: args.workers,
                        nav_timeout: std::time::Duration::from_secs_f64(args.nav_timeout_secs),
                        assets,
                    })
                    .await?,
                )
            }
        })
    }

    fn as_dyn(&self) -> &dyn PageCapture {
        match self {
            Self::Browser(b) => b,
            Self::Synthetic(s) => s,
        }
    }

    async fn close(self) {
        if let Self::Browser(b) = self {
            let left = b.shutdown().await;
            if left > 0 {
                eprintln!("warning: {left} browser processes survived shutdown");
            }
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

#[derive(Deserialize)]
struct HtmlDoc {
    id: String,
    html: String,
}

async fn cmd_render(a: RenderArgs) -> Result<()> {
    let viewport = Viewport::parse(&a.viewport).with_context(|| format!("bad viewport `{}`", a.viewport))?;
    let docs: Vec<HtmlDoc> = read_jsonl(&a.input)?;
    let capture = Capture::open(&a.renderer).await?;
    std::fs::create_dir_all(&a.out)?;
    let start = Instant::now();
    let results = {
        let cap = capture.as_dyn();
        let out = &a.out;
        futures::future::join_all(docs.iter().map(|d| async move {
            let r = render_html(cap, &d.html, viewport, &out.join(format!("{}.png", d.id))).await;
            (d.id.clone(), r)
        }))
        .await
    };
    let elapsed = start.elapsed().as_secs_f64();
    capture.close().await;
    let stdout = std::io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    let mut ok = 0;
    for (id, r) in results {
        let r = r?;
        ok += usize::from(r.verdict == codeworld::render::RenderVerdict::Ok);
        serde_json::to_writer(&mut w, &serde_json::json!({ "id": id, "result": r }))?;
        writeln!(w)?;
    }
    w.flush()?;
    eprintln!(
        "{ok}/{} rendered ok in {elapsed:.2}s ({:.2} renders/s)",
        docs.len(),
        docs.len() as f64 / elapsed.max(1e-9)
    );
    Ok(())
}

async fn cmd_datagen(config: Option<&Path>, a: DatagenArgs) -> Result<()> {
    let gw = gateway(config)?;
    let strategy = Strategy::parse(&a.strategy).with_context(|| format!("unknown strategy `{}`", a.strategy))?;
    let episodes = read_episodes_jsonl(&a.episodes)?;
    let cfg = DatagenConfig {
        strategy,
        dataset: a.dataset,
        max_in_flight: a.max_in_flight,
        temperature: a.temperature,
        ..DatagenConfig::new(a.frontier, a.work_dir)
    };
    let outcome = generate_dataset(&gw, &episodes, &cfg).await?;
    write_jsonl(&a.out, &outcome.samples)?;
    write_jsonl(&a.report, &outcome.rejections)?;
    println!("{}", serde_json::to_string_pretty(&outcome.report)?);
    Ok(())
}

async fn cmd_eval(config: Option<&Path>, a: EvalArgs) -> Result<()> {
    let gw = gateway(config)?;
    let bench = read_transitions_jsonl(&a.bench)?;
    let name = a.name.unwrap_or_else(|| {
        a.bench
            .file_stem()
            .map_or_else(|| "bench".into(), |s| s.to_string_lossy().into_owned())
    });
    let cfg = EvalConfig {
        benchmark: name,
        max_in_flight: a.max_in_flight,
        judge_max_side: a.judge_max_side,
        ..EvalConfig::new(a.wm.clone(), a.judges, a.providers, a.work_dir)
    };
    let capture = Capture::open(&a.renderer).await?;
    let result = run_benchmark(&gw, capture.as_dyn(), &bench, &cfg).await;
    capture.close().await;
    let mut report = result?;
    report.generated_at = Some(chrono::Utc::now().to_rfc3339());
    write_json(&a.out, &report)?;
    print!("{}", format_table(&[(a.wm.as_str(), vec![&report])]));
    Ok(())
}

async fn cmd_bench(config: Option<&Path>, c: BenchCommand) -> Result<()> {
    match c {
        BenchCommand::Dedup {
            input,
            tau,
            provider,
            clusters,
        } => {
            let gw = gateway(config)?;
            let ts = read_transitions_jsonl(&input)?;
            let cfg = DedupConfig {
                threshold: tau,
                provider,
                ..DedupConfig::default()
            };
            let found = find_duplicate_clusters(&gw, &ts, &cfg).await?;
            write_clusters(&clusters, &found)?;
            println!("{}", serde_json::to_string_pretty(&DedupReport::new(&cfg, &ts, &found))?);
        }
        BenchCommand::Decide {
            clusters,
            decisions,
            cluster,
            decision,
            representative,
            annotator,
        } => {
            let cs = read_clusters(&clusters)?;
            let decision = match decision.as_str() {
                "duplicates" => Decision::Duplicates,
                "distinct" => Decision::Distinct,
                _ => Decision::Pending,
            };
            let representative = match (decision, representative) {
                (Decision::Duplicates, None) => cs
                    .iter()
                    .find(|c| c.cluster_id == cluster)
                    .map(|c| c.default_representative().to_owned()),
                (_, r) => r,
            };
            let rec = DecisionRecord::new(cluster, decision, representative, annotator);
            let written = append_decision(&decisions, &cs, &rec)?;
            println!("{}", if written { "recorded" } else { "unchanged" });
        }
        BenchCommand::Apply {
            input,
            clusters,
            decisions,
            out,
        } => {
            let ts = read_transitions_jsonl(&input)?;
            let kept = apply_adjudication(&ts, &read_clusters(&clusters)?, &read_decisions(&decisions)?)?;
            write_transitions_jsonl(&out, &kept)?;
            println!("{} -> {} transitions", ts.len(), kept.len());
        }
        BenchCommand::Sample { input, n, seed, out } => {
            let ts = read_transitions_jsonl(&input)?;
            let subset = sample_split(&ts, n, seed)?;
            write_transitions_jsonl(&out, &subset)?;
            println!("sampled {} of {} (seed {seed})", subset.len(), ts.len());
        }
    }
    Ok(())
}

fn resolve_sample_paths(samples: &mut [PolicySample], base: &Path) {
    for s in samples {
        if s.s_t.path().is_relative() {
            s.s_t = codeworld::trajectory::StateImage::new(base.join(s.s_t.path()), s.s_t.width_px, s.s_t.height_px);
        }
    }
}

async fn cmd_policy(config: Option<&Path>, a: PolicyArgs) -> Result<()> {
    let gw = gateway(config)?;
    let mode = PolicyMode::parse(&a.mode).with_context(|| format!("unknown mode `{}`", a.mode))?;
    let mut samples: Vec<PolicySample> = read_jsonl(&a.samples)?;
    resolve_sample_paths(&mut samples, a.samples.parent().unwrap_or(Path::new(".")));
    let cfg = PolicyConfig {
        wm: a.wm,
        k: a.k,
        shuffle: a.shuffle,
        max_in_flight: a.max_in_flight,
        ..PolicyConfig::new(a.policy, mode, a.work_dir)
    };
    let capture = if mode == PolicyMode::ValueWithWm {
        Some(Capture::open(&a.renderer).await?)
    } else {
        None
    };
    let result = run_policy_eval(&gw, capture.as_ref().map(Capture::as_dyn), &samples, &cfg).await;
    if let Some(c) = capture {
        c.close().await;
    }
    let report = result?;
    write_jsonl(&a.out, &report.rows)?;
    println!(
        "{}: {}/{} correct ({:.2}%), {} flagged",
        a.mode, report.correct, report.samples, report.accuracy_pct, report.flagged
    );
    Ok(())
}

#[derive(Deserialize)]
struct ScalingRuns {
    series: Vec<ScalingSeries>,
}

#[derive(Deserialize)]
struct ScalingSeries {
    name: String,
    points: Vec<(f64, f64)>,
}

fn cmd_analyze(c: AnalyzeCommand) -> Result<()> {
    match c {
        AnalyzeCommand::Scaling { runs, out_dir } => {
            let runs: ScalingRuns = serde_json::from_reader(File::open(&runs)?)?;
            let mut fits = Vec::new();
            let mut chart = Chart::new("Data scaling", "training samples", "score");
            for s in &runs.series {
                let fit = fit_power_law(&s.points).with_context(|| format!("series {}", s.name))?;
                let (lo, hi) = s
                    .points
                    .iter()
                    .fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
                let curve: Vec<(f64, f64)> = (0..=40)
                    .map(|i| {
                        let x = lo * (hi / lo).powf(f64::from(i) / 40.0);
                        (x, fit.predict(x))
                    })
                    .collect();
                chart = chart
                    .with_series(s.name.clone(), s.points.clone(), SeriesStyle::Points)
                    .with_series(format!("{} fit", s.name), curve, SeriesStyle::Line);
                fits.push(serde_json::json!({ "name": s.name, "fit": fit }));
            }
            let mean_r2 = fits
                .iter()
                .filter_map(|f| f["fit"]["r_squared"].as_f64())
                .sum::<f64>()
                / fits.len().max(1) as f64;
            let out = serde_json::json!({ "fits": fits, "mean_r_squared": mean_r2 });
            println!("{}", serde_json::to_string_pretty(&out)?);
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("scaling.svg"), chart.to_svg())?;
                write_json(&dir.join("scaling.json"), &out)?;
            }
        }
        AnalyzeCommand::Gains { report, out_dir } => {
            let r: BenchmarkReport = serde_json::from_reader(File::open(&report)?)?;
            let rows: Vec<GainRow<f64>> = r
                .rows
                .iter()
                .filter_map(|row| {
                    Some(GainRow {
                        baseline: row.baseline_similarity.as_ref()?.mean,
                        predicted: row.similarity.as_ref()?.mean,
                    })
                })
                .collect();
            if rows.is_empty() {
                bail!("report has no rows with both similarity scores");
            }
            let g = gain_analysis(&rows);
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({ "n": rows.len(), "pearson": g.pearson }))?
            );
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir)?;
                let mut csv = String::from("x,gain,ceiling\n");
                for p in &g.points {
                    csv.push_str(&format!("{},{},{}\n", p.x, p.gain, p.ceiling));
                }
                std::fs::write(dir.join("gains.csv"), csv)?;
                let chart = Chart::new("Similarity gain", "sim(S_t, S_t+1)", "gain")
                    .with_series("samples", g.points.iter().map(|p| (p.x, p.gain)).collect(), SeriesStyle::Points)
                    .with_series("ceiling", vec![(0.0, 1.0), (1.0, 0.0)], SeriesStyle::Line);
                std::fs::write(dir.join("gains.svg"), chart.to_svg())?;
            }
        }
        AnalyzeCommand::Pareto { points } => {
            let text = std::fs::read_to_string(&points)?;
            let mut named = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols.len() < 3 || (i == 0 && cols[1].parse::<f64>().is_err()) {
                    continue;
                }
                named.push((cols[0].to_owned(), cols[1].parse::<f64>()?, cols[2].parse::<f64>()?));
            }
            let pts: Vec<(f64, f64)> = named.iter().map(|(_, s, y)| (*s, *y)).collect();
            for (size, score) in pareto_frontier(&pts) {
                let name = named
                    .iter()
                    .find(|(_, s, y)| *s == size && *y == score)
                    .map_or("", |n| n.0.as_str());
                println!("{name},{size},{score}");
            }
        }
        AnalyzeCommand::Agreement { reports } => {
            let reports: Vec<BenchmarkReport> = reports
                .iter()
                .map(|p| Ok(serde_json::from_reader(File::open(p)?)?))
                .collect::<Result<_>>()?;
            let mut judges: Vec<String> = reports.iter().flat_map(|r| r.config.judges.clone()).collect();
            judges.sort();
            judges.dedup();
            let mut pairs = Vec::new();
            for (i, a) in judges.iter().enumerate() {
                for b in &judges[i + 1..] {
                    let (mut xs, mut ys) = (Vec::new(), Vec::new());
                    for row in reports.iter().flat_map(|r| &r.rows) {
                        if let (Some(va), Some(vb)) = (row.panel.per_judge.get(a), row.panel.per_judge.get(b)) {
                            let ind = |s: JudgeStatus| if s == JudgeStatus::Success { 1.0 } else { 0.0 };
                            xs.push(ind(va.status));
                            ys.push(ind(vb.status));
                        }
                    }
                    let model_level: (Vec<f64>, Vec<f64>) = reports
                        .iter()
                        .filter_map(|r| Some((*r.per_judge_success_pct.get(a)?, *r.per_judge_success_pct.get(b)?)))
                        .unzip();
                    pairs.push(serde_json::json!({
                        "judges": [a, b],
                        "samples": correlations(&xs, &ys).ok(),
                        "reports": correlations(&model_level.0, &model_level.1).ok(),
                    }));
                }
            }
            println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "pairs": pairs }))?);
        }
    }
    Ok(())
}

async fn cmd_review(a: ReviewArgs) -> Result<()> {
    let clusters = read_clusters(&a.clusters)?;
    let state = Arc::new(ReviewState::new(clusters, a.decisions)?);
    let (addr, server) = bind(state, SocketAddr::new(a.host, a.port)).await?;
    eprintln!("review UI at http://{addr}/");
    server.await?;
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let config = cli.config.as_deref();
    match cli.command {
        Command::Render(a) => cmd_render(a).await,
        Command::Datagen(a) => cmd_datagen(config, a).await,
        Command::Eval(a) => cmd_eval(config, a).await,
        Command::Bench(c) => cmd_bench(config, c).await,
        Command::PolicyEval(a) => cmd_policy(config, a).await,
        Command::Analyze(c) => cmd_analyze(c),
        Command::Review(a) => cmd_review(a).await,
    }
}
