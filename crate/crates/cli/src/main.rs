use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use sentimark::config::{Profile, RunConfig};
use sentimark::corpus::{
    build_sgts_benchmark, load_dataset, make_validation_split, read_examples, read_pairs, sample_quadruples,
    write_examples, write_pairs, DataFormat, DatasetSplits,
};
use sentimark::encoder::{load_checkpoint, Encoder};
use sentimark::evaluation::geometry::{pca_project, render_scatter_svg, write_projection_csv};
use sentimark::evaluation::probe::{LabeledSplit, DEFAULT_GRID};
use sentimark::evaluation::{
    alignment_uniformity, fewshot_eval, linear_probe, nn_query, sgts_score, FewShotConfig,
};
use sentimark::lexicon::parse_sentiwordnet;
use sentimark::objectives::Ablation;
use sentimark::report::{build_report, collect_records, render_table, ResultRecord};
use sentimark::{synthetic, trainer, Embedder, Example, Lexicon, Model, Polarity, Tokenizer};

const OUT_ENV: &str = "SENTIMARK_OUT";

#[derive(Parser)]
#[command(name = "sentimark", version, about = "Sentiment-aware sentence embeddings")]
struct Cli {
    /// Seed for every sampled quantity.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lexicon statistics and conversion.
    #[command(subcommand)]
    Lexicon(LexiconCmd),
    /// Dataset utilities.
    #[command(subcommand)]
    Data(DataCmd),
    /// Pre-train an encoder from a run configuration.
    Pretrain(PretrainArgs),
    /// Sentiment-similarity correlation plus alignment/uniformity.
    EvalSgts(EvalSgtsArgs),
    /// Linear probe on frozen embeddings.
    Probe(ProbeArgs),
    /// Few-shot fine-tuning over several seeds.
    Fewshot(FewshotArgs),
    /// Write sentence embeddings as CSV.
    Embed(EmbedArgs),
    /// 2-D PCA projection of an embedding CSV.
    Plot(PlotArgs),
    /// Nearest neighbours of a query sentence.
    Query(QueryArgs),
    /// Merge result files under a run directory.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum LexiconCmd {
    Stats {
        #[arg(long)]
        lexicon: PathBuf,
        /// Labeled data to measure the share of sentiment-word tokens on.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Convert a SentiWordNet 3.0 dump to the lexicon TSV format.
    ConvertSwn {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum DataCmd {
    /// Build a sentiment-similarity pair benchmark from labeled sentences.
    BuildSgts {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hold out a validation split from a training file.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the templated toy corpus and its lexicon.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        train: usize,
        #[arg(long, default_value_t = 400)]
        valid: usize,
        #[arg(long, default_value_t = 400)]
        test: usize,
    },
}

#[derive(Args)]
struct OutArg {
    /// Output directory (default: $SENTIMARK_OUT, else ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArg {
    fn dir(&self, sub: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"))
                .join(sub)
        })
    }
}

#[derive(Args)]
struct NameArgs {
    /// Model name for result files (default: checkpoint file stem).
    #[arg(long)]
    name: Option<String>,
    /// Dataset name for result files (default: data path stem).
    #[arg(long)]
    dataset_name: Option<String>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override; repeatable.
    #[arg(long = "set")]
    sets: Vec<String>,
    /// Profile used when the config does not name one.
    #[arg(long, default_value = "desk")]
    profile: String,
    /// One of L_pos, L_neg, L_pos+L_neg, L_w+L_pos, L_w+L_neg, L_w+L_pos+L_neg.
    #[arg(long)]
    ablation: Option<String>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct EvalSgtsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[command(flatten)]
    names: NameArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory with train/valid/test files.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    names: NameArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct FewshotArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(short, long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, default_value_t = 500)]
    val_size: usize,
    #[command(flatten)]
    names: NameArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the labels, one per line with a header.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// `.svg` renders a scatter plot; anything else gets coordinates CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long)]
    candidates: PathBuf,
    #[arg(short, long, default_value_t = 5)]
    k: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    run_dir: PathBuf,
    /// Where report.json / report.txt go (default: the run directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "unnamed".into())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<Model> {
    Ok(load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?.0)
}

fn lexicon_stats(lex: &Lexicon) -> Value {
    let mut counts = [0usize; 4];
    for (word, _) in lex.iter() {
        counts[match lex.polarity(word) {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
            Polarity::Multi => 2,
            Polarity::None => 3,
        }] += 1;
    }
    json!({"entries": lex.len(), "positive": counts[0], "negative": counts[1], "multi": counts[2], "none": counts[3]})
}

fn splits_with_valid(data: &Path, seed: u64) -> Result<DatasetSplits> {
    let mut d = load_dataset(data, None)?;
    if d.valid.is_empty() {
        let (train, valid) = make_validation_split(&d.train, 0.1, seed)?;
        d.train = train;
        d.valid = valid;
    }
    Ok(d)
}

fn run(cli: Cli) -> Result<Value> {
    let seed = cli.seed;
    match cli.command {
        Command::Lexicon(LexiconCmd::Stats { lexicon, data }) => {
            let lex = Lexicon::load(&lexicon)?;
            let mut stats = lexicon_stats(&lex);
            if let Some(data) = data {
                let d = load_dataset(&data, None)?;
                let texts: Vec<&str> = d.train.iter().chain(&d.valid).chain(&d.test).map(|e| e.text.as_str()).collect();
                stats["sentiword_fraction"] = json!(lex.sentiword_fraction(&texts)?);
            }
            Ok(stats)
        }
        Command::Lexicon(LexiconCmd::ConvertSwn { input, output }) => {
            let lex = Lexicon::from_records(parse_sentiwordnet(&input)?)?;
            lex.save(&output)?;
            let mut stats = lexicon_stats(&lex);
            stats["output"] = json!(output);
            Ok(stats)
        }
        Command::Data(DataCmd::BuildSgts { input, out }) => {
            let examples = if input.is_dir() {
                let d = load_dataset(&input, None)?;
                if d.valid.is_empty() { d.train } else { d.valid }
            } else {
                read_examples(&input, DataFormat::from_path(&input).unwrap_or(DataFormat::Jsonl))?
            };
            let pairs = build_sgts_benchmark(&examples, seed)?;
            write_pairs(&out, &pairs)?;
            let same = pairs.iter().filter(|p| p.label == 1).count();
            Ok(json!({"pairs": pairs.len(), "same_polarity": same, "sentences": examples.len(), "out": out}))
        }
        Command::Data(DataCmd::Split { input, fraction, out }) => {
            let examples = read_examples(&input, DataFormat::from_path(&input).unwrap_or(DataFormat::Jsonl))?;
            let (train, valid) = make_validation_split(&examples, fraction, seed)?;
            std::fs::create_dir_all(&out)?;
            write_examples(out.join("train.jsonl"), &train)?;
            write_examples(out.join("valid.jsonl"), &valid)?;
            Ok(json!({"train": train.len(), "valid": valid.len(), "out": out}))
        }
        Command::Data(DataCmd::Synth { out, train, valid, test }) => {
            let c = synthetic::generate(train, valid, seed)?;
            let test_set = synthetic::sentences(test, seed.wrapping_add(1));
            std::fs::create_dir_all(&out)?;
            write_examples(out.join("train.jsonl"), &c.train)?;
            write_examples(out.join("valid.jsonl"), &c.valid)?;
            if test > 0 {
                write_examples(out.join("test.jsonl"), &test_set)?;
            }
            c.lexicon.save(out.join("lexicon.tsv"))?;
            Ok(json!({"train": train, "valid": valid, "test": test, "lexicon_entries": c.lexicon.len(), "out": out}))
        }
        Command::Pretrain(args) => pretrain(args, seed),
        Command::EvalSgts(args) => {
            let model = load_model(&args.model)?;
            let pairs = read_pairs(&args.pairs)?;
            let report = sgts_score(&model, &pairs)?;
            let au = alignment_uniformity(&model, &pairs)?;
            let name = args.names.name.unwrap_or_else(|| stem(&args.model));
            let dataset = args.names.dataset_name.unwrap_or_else(|| stem(&args.pairs));
            let dir = args.out.dir("eval");
            let sgts = ResultRecord::Sgts {
                model: name.clone(),
                dataset: dataset.clone(),
                spearman_rho: report.spearman_rho,
                n_pairs: report.n_pairs,
            };
            write_json(&dir.join(format!("sgts_{name}_{dataset}.json")), &sgts)?;
            write_json(
                &dir.join(format!("align_uniform_{name}_{dataset}.json")),
                &ResultRecord::AlignUniform {
                    model: name.clone(),
                    dataset: dataset.clone(),
                    alignment: au.alignment,
                    uniformity: au.uniformity,
                },
            )?;
            write_json(&dir.join(format!("sgts_pairs_{name}_{dataset}.json")), &report)?;
            Ok(json!({"model": name, "dataset": dataset, "spearman_rho": report.spearman_rho, "n_pairs": report.n_pairs,
                      "alignment": au.alignment, "uniformity": au.uniformity, "out": dir}))
        }
        Command::Probe(args) => {
            let model = load_model(&args.model)?;
            let d = splits_with_valid(&args.data, seed)?;
            if d.test.is_empty() {
                bail!("probe needs a test split under {}", args.data.display());
            }
            let embed = |xs: &[Example]| -> Result<(ndarray::Array2<f64>, Vec<u8>)> {
                let texts: Vec<&str> = xs.iter().map(|e| e.text.as_str()).collect();
                Ok((model.embed_texts(&texts)?, xs.iter().map(|e| e.label.as_class() as u8).collect()))
            };
            let (xtr, ytr) = embed(&d.train)?;
            let (xva, yva) = embed(&d.valid)?;
            let (xte, yte) = embed(&d.test)?;
            let r = linear_probe(
                LabeledSplit { x: &xtr, y: &ytr },
                LabeledSplit { x: &xva, y: &yva },
                LabeledSplit { x: &xte, y: &yte },
                &DEFAULT_GRID,
            )?;
            let name = args.names.name.unwrap_or_else(|| stem(&args.model));
            let dataset = args.names.dataset_name.unwrap_or_else(|| stem(&args.data));
            let dir = args.out.dir("eval");
            write_json(
                &dir.join(format!("probe_{name}_{dataset}.json")),
                &ResultRecord::Probe {
                    model: name.clone(),
                    dataset: dataset.clone(),
                    accuracy: r.accuracy,
                    regularization: r.regularization,
                },
            )?;
            write_json(&dir.join(format!("probe_detail_{name}_{dataset}.json")), &r)?;
            Ok(json!({"model": name, "dataset": dataset, "accuracy": r.accuracy, "regularization": r.regularization,
                      "n_train": r.n_train, "n_valid": r.n_valid, "n_test": r.n_test, "out": dir}))
        }
        Command::Fewshot(args) => {
            let model = load_model(&args.model)?;
            let d = load_dataset(&args.data, None)?;
            let test = if d.test.is_empty() { &d.valid } else { &d.test };
            if test.is_empty() {
                bail!("few-shot needs a test (or validation) split under {}", args.data.display());
            }
            let cfg = FewShotConfig {
                k: args.k,
                seeds: (0..args.seeds as u64).map(|i| seed.wrapping_add(i)).collect(),
                learning_rate: args.lr,
                max_epochs: args.max_epochs,
                val_size: args.val_size,
                ..Default::default()
            };
            let r = fewshot_eval(&model, &d.train, test, &cfg)?;
            let name = args.names.name.unwrap_or_else(|| stem(&args.model));
            let dataset = args.names.dataset_name.unwrap_or_else(|| stem(&args.data));
            let dir = args.out.dir("eval");
            write_json(
                &dir.join(format!("fewshot{}_{name}_{dataset}.json", args.k)),
                &ResultRecord::Fewshot {
                    model: name.clone(),
                    dataset: dataset.clone(),
                    k: args.k,
                    mean: r.mean,
                    std: r.std,
                },
            )?;
            write_json(&dir.join(format!("fewshot{}_detail_{name}_{dataset}.json", args.k)), &r)?;
            Ok(json!({"model": name, "dataset": dataset, "k": r.k, "mean": r.mean, "std": r.std, "accuracies": r.accuracies, "out": dir}))
        }
        Command::Embed(args) => {
            let model = load_model(&args.model)?;
            let examples = read_examples(&args.input, DataFormat::from_path(&args.input).unwrap_or(DataFormat::Jsonl))?;
            let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
            let emb = model.embed_texts(&texts)?;
            let mut out = (0..emb.ncols()).map(|i| format!("dim_{i}")).collect::<Vec<_>>().join(",");
            out.push('\n');
            for row in emb.rows() {
                out.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
                out.push('\n');
            }
            std::fs::write(&args.out, out).with_context(|| format!("writing {}", args.out.display()))?;
            if let Some(lp) = &args.labels_out {
                let mut labels = String::from("label\n");
                for e in &examples {
                    labels.push_str(if e.label.as_class() == 1 { "positive\n" } else { "negative\n" });
                }
                std::fs::write(lp, labels).with_context(|| format!("writing {}", lp.display()))?;
            }
            Ok(json!({"rows": emb.nrows(), "dim": emb.ncols(), "out": args.out}))
        }
        Command::Plot(args) => {
            let emb = read_matrix_csv(&args.embeddings)?;
            let labels = match &args.labels {
                Some(p) => read_label_csv(p)?,
                None => vec!["all".to_string(); emb.nrows()],
            };
            if labels.len() != emb.nrows() {
                bail!("{} embeddings but {} labels", emb.nrows(), labels.len());
            }
            let proj = pca_project(&emb, 2)?;
            if args.out.extension().is_some_and(|e| e == "svg") {
                std::fs::write(&args.out, render_scatter_svg(&proj.coords, &labels))?;
            } else {
                write_projection_csv(&args.out, &proj.coords, &labels)?;
            }
            Ok(json!({"points": emb.nrows(), "explained_variance": proj.explained_variance,
                      "rank_deficient": proj.rank_deficient, "out": args.out}))
        }
        Command::Query(args) => {
            let model = load_model(&args.model)?;
            let cands = read_examples(&args.candidates, DataFormat::from_path(&args.candidates).unwrap_or(DataFormat::Jsonl))?;
            let hits = nn_query(&model, &args.query, &cands, args.k)?;
            Ok(json!({"query": args.query, "neighbors": hits}))
        }
        Command::Report(args) => {
            let records = collect_records(&args.run_dir)?;
            let report = build_report(&records)?;
            let dir = args.out.unwrap_or_else(|| args.run_dir.clone());
            write_json(&dir.join("report.json"), &report)?;
            let table = render_table(&report);
            std::fs::write(dir.join("report.txt"), &table)?;
            eprint!("{table}");
            Ok(json!({"rows": report.rows.len(), "absent": report.absent, "correlations": report.correlations.len(), "out": dir}))
        }
    }
}

fn pretrain(args: PretrainArgs, seed: u64) -> Result<Value> {
    let profile: Profile = args.profile.parse().map_err(anyhow::Error::msg)?;
    let mut sets = vec![format!("seed={seed}")];
    sets.extend(args.sets);
    let mut cfg = RunConfig::resolve(args.config.as_deref(), &sets, profile)?;
    if let Some(name) = &args.ablation {
        let ab = Ablation::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .with_context(|| format!("unknown ablation `{name}`"))?;
        cfg.apply_ablation(ab);
    }
    let out = match &cfg.train.output_dir {
        Some(d) => d.clone(),
        None => args.out.dir("pretrain"),
    };
    cfg.train.output_dir = Some(out.clone());
    cfg.validate(true)?;
    let dataset = cfg.dataset.clone().context("config key `dataset` is required")?;
    let lexicon_path = cfg.lexicon.clone().context("config key `lexicon` is required")?;
    let lexicon = Lexicon::load(&lexicon_path)?;
    let d = splits_with_valid(&dataset, cfg.seed())?;
    let texts: Vec<&str> = d.train.iter().map(|e| e.text.as_str()).collect();
    let tokenizer = Tokenizer::build(&texts, cfg.tokenizer_mode, cfg.max_len, cfg.min_count);
    let encoder = Encoder::new(cfg.encoder_config(tokenizer.vocab().len()))?;
    let model = Model::new(tokenizer, encoder)?;
    let quads = sample_quadruples(&d.train, cfg.seed())?;
    let bench = match &cfg.benchmark {
        Some(p) => read_pairs(p)?,
        None => build_sgts_benchmark(&d.valid, cfg.seed())?,
    };
    std::fs::create_dir_all(&out)?;
    cfg.write(out.join("run.cfg"))?;
    let (_, log) = trainer::pretrain(model, &quads, &bench, &lexicon, &cfg.hp, &cfg.train)?;
    Ok(json!({"best_step": log.best_step, "best_sgts": log.best_sgts, "steps": log.steps.len(),
              "quadruples": quads.len(), "benchmark_pairs": bench.len(),
              "checkpoint": out.join("best.smck"), "log": out.join("training_log.jsonl")}))
}

fn read_matrix_csv(path: &Path) -> Result<ndarray::Array2<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{}:{}: not a numeric row", path.display(), i + 1))?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            bail!("{}:{}: ragged row", path.display(), i + 1);
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(ndarray::Array2::from_shape_vec((rows.len(), cols), rows.concat())?)
}

fn read_label_csv(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().skip(1).filter(|l| !l.trim().is_empty()).map(|l| l.trim().to_string()).collect())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("{}", json!({"error": chain.join(": ")}));
            ExitCode::FAILURE
        }
    }
}
