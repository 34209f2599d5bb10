use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jointseg::corpus::{format_slash, infer_tagset};
use jointseg::evaluation::{count, EvalCounts};
use jointseg::pipeline::predict_se;
use jointseg::synthetic::{LanguageSpec, SyntheticLanguage};
use jointseg::train::{train_kf, train_se_with, KfDataOptions};
use jointseg::uncertainty::{
    format_report_line, sample_candidates, sentence_seed, UncertainComponent, UncertaintyTally, REPORT_HEADER,
};
use jointseg::{
    AnnotatedCorpus, CorpusFormat, Error, KfModel, KnowledgeCorpus, Pipeline, PipelineOptions, Result, RunConfig,
    SeModel, TagSet, TransitionMask,
};

/// Joint word segmentation and POS tagging with uncertainty-driven knowledge fusion.
#[derive(Parser)]
#[command(name = "jointseg", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the first-stage tagger.
    TrainSe {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train the knowledge-fusion model on first-stage output.
    TrainKf {
        #[arg(long)]
        se: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        knowledge: KnowledgeArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Knowledge index operations.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Report MC-dropout uncertain components per sentence.
    Sample {
        #[arg(long)]
        se: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "raw")]
        input_format: InputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrieve knowledge sentences for a span of a sentence.
    Retrieve {
        #[command(flatten)]
        knowledge: KnowledgeArgs,
        #[arg(long)]
        sentence: String,
        /// Character span `start-end`, end exclusive.
        #[arg(long)]
        component: String,
        #[arg(long)]
        top_m: Option<usize>,
    },
    /// Segment and tag raw text with the full pipeline.
    Predict {
        #[arg(long)]
        se: PathBuf,
        /// Fusion model; required unless --se-only.
        #[arg(long)]
        kf: Option<PathBuf>,
        #[command(flatten)]
        knowledge: KnowledgeArgs,
        /// Skip uncertainty detection and fusion.
        #[arg(long)]
        se_only: bool,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "raw")]
        input_format: InputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against gold annotations.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Aligned table instead of `metric<TAB>value` lines.
        #[arg(long)]
        table: bool,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Uncertain-component statistics of the tagger on a gold corpus.
    Stats {
        #[arg(long)]
        se: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        table: bool,
        #[arg(long)]
        format: Option<CorpusFormat>,
    },
    /// Write the synthetic ambiguity benchmark.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 300)]
        train: usize,
        #[arg(long, default_value_t = 150)]
        test: usize,
        /// Disable homograph ambiguity.
        #[arg(long)]
        unambiguous: bool,
    },
}

#[derive(Subcommand)]
enum IndexAction {
    /// Build an index from a text file with one sentence per line.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// POS inventory, one tag per line.
    #[arg(long)]
    tagset: Option<PathBuf>,
    #[arg(long)]
    format: Option<CorpusFormat>,
}

#[derive(Args)]
struct KnowledgeArgs {
    /// Prebuilt knowledge index.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Knowledge text, one sentence per line; indexed on the fly.
    #[arg(long)]
    knowledge: Option<PathBuf>,
}

#[derive(Clone, Copy)]
enum InputFormat {
    Raw,
    Annotated(CorpusFormat),
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(InputFormat::Raw),
            other => other.parse().map(InputFormat::Annotated),
        }
    }
}

struct Ctx {
    config: RunConfig,
    seed: u64,
}

impl Ctx {
    fn format(&self, explicit: Option<CorpusFormat>) -> Result<CorpusFormat> {
        match (explicit, &self.config.data.format) {
            (Some(f), _) => Ok(f),
            (None, Some(f)) => f.parse(),
            (None, None) => Ok(CorpusFormat::Slash),
        }
    }

    fn tagset(&self, explicit: Option<&Path>) -> Result<Option<TagSet>> {
        if let Some(path) = explicit.or(self.config.data.tagset.as_deref()) {
            return TagSet::load(path).map(Some);
        }
        self.config.data.pos_tags.clone().map(TagSet::new).transpose()
    }

    fn knowledge(&self, args: &KnowledgeArgs) -> Result<KnowledgeCorpus> {
        let retrieval = &self.config.retrieval;
        if let Some(path) = args.index.as_ref().or(retrieval.index.as_ref()) {
            return KnowledgeCorpus::load(path);
        }
        if let Some(path) = args.knowledge.as_ref().or(retrieval.corpus.as_ref()) {
            return KnowledgeCorpus::from_text(&fs::read_to_string(path)?, retrieval.max_ngram);
        }
        Err(Error::InvalidArgument("no knowledge source: pass --index or --knowledge".into()))
    }
}

fn read_sentences(path: &Path, format: InputFormat, tagset: &TagSet) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    match format {
        InputFormat::Raw => Ok(text.lines().map(|l| l.trim_end_matches('\r').to_owned()).collect()),
        InputFormat::Annotated(f) => Ok(AnnotatedCorpus::parse(&text, f, tagset, None)?
            .sentences
            .into_iter()
            .map(|s| s.text)
            .collect()),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn parse_component(text: &str) -> Result<UncertainComponent> {
    let bad = || Error::InvalidArgument(format!("component `{text}` is not `start-end`"));
    let (a, b) = text.split_once('-').ok_or_else(bad)?;
    let (start, end) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
    if start >= end {
        return Err(bad());
    }
    Ok(UncertainComponent::new(start, end))
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.common.seed.unwrap_or(config.seed),
        config,
    };
    let cfg = &ctx.config;
    match cli.command {
        Command::TrainSe { train, out, data } => {
            let tagset = ctx
                .tagset(data.tagset.as_deref())?
                .ok_or_else(|| Error::InvalidArgument("a tagset is required (--tagset or data.tagset)".into()))?;
            let corpus = AnnotatedCorpus::load(&train, ctx.format(data.format)?, &tagset, Some(cfg.model.max_seq_len))?;
            let (model, _) = train_se_with(&corpus, &tagset, &cfg.model, &cfg.training, ctx.seed, |epoch, loss, _| {
                eprintln!("epoch {epoch}\tloss {loss:.6}");
                true
            })?;
            model.save(out)?;
        }
        Command::TrainKf {
            se,
            train,
            out,
            knowledge,
            data,
        } => {
            let se = SeModel::load(se)?;
            let knowledge = ctx.knowledge(&knowledge)?;
            let format = ctx.format(data.format)?;
            let corpus = AnnotatedCorpus::load(&train, format, &se.tagset, Some(cfg.model.max_seq_len))?;
            let options = KfDataOptions {
                samples: cfg.sampling.k,
                top_m: cfg.retrieval.top_m,
                alpha: cfg.fusion.alpha,
                seed: ctx.seed,
            };
            let (model, _, stats) = train_kf(&se, &corpus, &knowledge, &cfg.kf_config(), &cfg.kf_training, &options)?;
            eprintln!(
                "{} instances from {} sentences ({} without components, {} too long)",
                stats.instances, stats.sentences, stats.skipped, stats.too_long
            );
            model.save(out)?;
        }
        Command::Index {
            action: IndexAction::Build { corpus, out },
        } => {
            let kc = KnowledgeCorpus::from_text(&fs::read_to_string(corpus)?, cfg.retrieval.max_ngram)?;
            kc.save(out)?;
            eprintln!("{} sentences, {} index keys", kc.len(), kc.num_keys());
        }
        Command::Sample {
            se,
            input,
            input_format,
            out,
        } => {
            let se = SeModel::load(se)?;
            let mask = TransitionMask::new(&se.tagset);
            let mut text = format!("{REPORT_HEADER}\n");
            for (i, sentence) in read_sentences(&input, input_format, &se.tagset)?.iter().enumerate() {
                if sentence.is_empty() {
                    continue;
                }
                let chars = se.vocab.encode(sentence);
                let report = sample_candidates(&se, &mask, &chars, cfg.sampling.k, sentence_seed(ctx.seed, i))?;
                let _ = writeln!(text, "{}", format_report_line(i, &report));
            }
            write_output(out.as_deref(), &text)?;
        }
        Command::Retrieve {
            knowledge,
            sentence,
            component,
            top_m,
        } => {
            let kc = ctx.knowledge(&knowledge)?;
            let hits = kc.retrieve(&sentence, parse_component(&component)?, top_m.unwrap_or(cfg.retrieval.top_m))?;
            let mut text = String::new();
            for (rank, hit) in hits.iter().enumerate() {
                let _ = writeln!(text, "{}\t{}\t{:.6}\t{}", rank + 1, hit.sentence_id, hit.score, hit.text);
            }
            write_output(None, &text)?;
        }
        Command::Predict {
            se,
            kf,
            knowledge,
            se_only,
            input,
            input_format,
            out,
        } => {
            let se = SeModel::load(se)?;
            let sentences = read_sentences(&input, input_format, &se.tagset)?;
            let mut text = String::new();
            if se_only {
                for s in &sentences {
                    let words = predict_se(&se, s)?;
                    text.push_str(&format_slash(&s.chars().collect::<Vec<_>>(), &words, &se.tagset));
                    text.push('\n');
                }
            } else {
                let kf_path = kf.ok_or_else(|| Error::InvalidArgument("--kf is required without --se-only".into()))?;
                let kf = KfModel::load(kf_path)?;
                let kc = ctx.knowledge(&knowledge)?;
                let options = PipelineOptions {
                    samples: cfg.sampling.k,
                    top_m: cfg.retrieval.top_m,
                    seed: ctx.seed,
                };
                let pipeline = Pipeline::new(&se, &kf, &kc, options)?;
                for (i, s) in sentences.iter().enumerate() {
                    let words = pipeline.predict(s, i)?.words;
                    text.push_str(&format_slash(&s.chars().collect::<Vec<_>>(), &words, &se.tagset));
                    text.push('\n');
                }
            }
            write_output(out.as_deref(), &text)?;
        }
        Command::Evaluate {
            gold,
            pred,
            table,
            data,
        } => {
            let format = ctx.format(data.format)?;
            let (gold_text, pred_text) = (fs::read_to_string(&gold)?, fs::read_to_string(&pred)?);
            let tagset = match ctx.tagset(data.tagset.as_deref())? {
                Some(t) => t,
                None => infer_tagset([gold_text.as_str(), pred_text.as_str()], format)?,
            };
            let load = |path: &Path| AnnotatedCorpus::load(path, format, &tagset, None);
            let (g, p) = (load(&gold)?, load(&pred)?);
            if g.len() != p.len() {
                return Err(Error::LengthMismatch(format!(
                    "{} gold sentences, {} predicted",
                    g.len(),
                    p.len()
                )));
            }
            let mut total = EvalCounts::default();
            for (a, b) in g.sentences.iter().zip(&p.sentences) {
                if a.text != b.text {
                    return Err(Error::LengthMismatch(format!(
                        "sentence at gold line {} differs from prediction line {}",
                        a.line, b.line
                    )));
                }
                total += count(&a.words, &b.words)?;
            }
            let report = total.report();
            write_output(None, &if table { report.to_table() } else { report.to_key_values() })?;
        }
        Command::Stats {
            se,
            gold,
            table,
            format,
        } => {
            let se = SeModel::load(se)?;
            let mask = TransitionMask::new(&se.tagset);
            let corpus = AnnotatedCorpus::load(&gold, ctx.format(format)?, &se.tagset, Some(se.config.max_seq_len))?;
            let mut tally = UncertaintyTally::default();
            let mut counts = EvalCounts::default();
            for (i, s) in corpus.sentences.iter().enumerate() {
                let report =
                    sample_candidates(&se, &mask, &se.vocab.encode(&s.text), cfg.sampling.k, sentence_seed(ctx.seed, i))?;
                let provisional = jointseg::tagset::decode_labels(&report.provisional);
                tally.add(&s.words, &provisional, &report.components)?;
                counts += count(&s.words, &provisional)?;
            }
            let mut report = counts.report();
            report.uncertainty = Some(tally.finish());
            write_output(None, &if table { report.to_table() } else { report.to_key_values() })?;
        }
        Command::Synth {
            out_dir,
            train,
            test,
            unambiguous,
        } => {
            let spec = LanguageSpec {
                ambiguity: !unambiguous,
                ..LanguageSpec::default()
            };
            let lang = SyntheticLanguage::new(spec, ctx.seed);
            fs::create_dir_all(&out_dir)?;
            let tagset = lang.tagset();
            fs::write(out_dir.join("tagset.txt"), tagset.to_file_string())?;
            let mut knowledge = String::new();
            for (i, (name, size)) in [("train_se.txt", train), ("train_kf.txt", train), ("test.txt", test)]
                .into_iter()
                .enumerate()
            {
                let split = lang.split(size, sentence_seed(ctx.seed, i));
                split.corpus.save(out_dir.join(name), CorpusFormat::Slash, tagset)?;
                for k in &split.knowledge {
                    knowledge.push_str(k);
                    knowledge.push('\n');
                }
                if name == "test.txt" {
                    let raw: String = split.corpus.texts().flat_map(|t| [t, "\n"]).collect();
                    fs::write(out_dir.join("test.raw.txt"), raw)?;
                }
            }
            fs::write(out_dir.join("knowledge.txt"), knowledge)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

