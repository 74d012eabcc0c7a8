use std::collections::HashSet;
use std::fs;
use std::path::Path;

use hsmp_core::analytics::{
    correlation_matrix, demographics, gold_rows, organ_involvement, stratified_prevalence,
    write_correlation_csv, write_involvement_csv, write_prevalence_csv, StrataConfig,
};
use hsmp_core::evaluation::{significance_table, Evaluation, SignificanceRow};
use hsmp_core::inference::{
    EfficiencyReport, InferenceConfig, InferenceEngine, InferenceMode, PredictionRow,
};
use hsmp_core::io::{read_jsonl, write_jsonl};
use hsmp_core::prompting::{build_tuning_set, NegativePolicy, TuningOptions};
use hsmp_core::scoring::{
    CachedScorer, OracleConfig, OracleScorer, RemoteConfig, RemoteScorer, Scorer,
};
use hsmp_core::split::SplitAssignment;
use hsmp_core::synth::{generate_corpus, SynthConfig};
use hsmp_core::{
    evaluate, filter_targets, generate_smp_pairs, load_corpus, save_corpus, stratified_split,
    BinaryLabelMatrix, CellId, Corpus, HeaderLexicon, LabelSchema, SmpOptions, TemplateSet,
    Verbalizer,
};
use log::{info, warn};
use serde::Serialize;

use crate::args::*;
use crate::output::{ensure_dir, invalid, write_json, Classify, CliResult, Provenance};

/// Schema, templates and headers resolved from the global flags.
struct Context {
    schema: LabelSchema,
    templates: TemplateSet,
    lexicon: HeaderLexicon,
}

impl Context {
    fn load(global: &Global) -> CliResult<Self> {
        let schema = match &global.schema {
            Some(p) => LabelSchema::load(p).invalid(format!("loading schema {}", p.display()))?,
            None => LabelSchema::standard().clone(),
        };
        let templates = match &global.templates {
            Some(p) => {
                TemplateSet::load(p).invalid(format!("loading templates {}", p.display()))?
            }
            None => TemplateSet::english(),
        };
        let lexicon = match &global.headers {
            Some(p) => HeaderLexicon::load(p)
                .map_err(anyhow::Error::msg)
                .invalid(format!("loading headers {}", p.display()))?,
            None => HeaderLexicon::default(),
        };
        Ok(Context {
            schema,
            templates,
            lexicon,
        })
    }

    fn verbalizer(&self) -> CliResult<Verbalizer> {
        Verbalizer::new(&self.schema, &self.templates).invalid("building hypotheses")
    }

    fn corpus(&self, path: &Path) -> CliResult<Corpus> {
        let corpus = load_corpus(path, &self.schema)
            .invalid(format!("loading corpus {}", path.display()))?;
        info!("loaded {} reports from {}", corpus.len(), path.display());
        Ok(corpus)
    }

    fn gold(&self, corpus: &Corpus) -> CliResult<BinaryLabelMatrix> {
        BinaryLabelMatrix::from_reports(&self.schema, &corpus.reports).invalid("corpus gold labels")
    }

    /// Explicit target file, else cells with enough gold positives, else
    /// every cell when the corpus is unannotated.
    fn targets(&self, args: &TargetArgs, corpus: &Corpus) -> CliResult<Vec<CellId>> {
        if let Some(path) = &args.targets {
            let text = fs::read_to_string(path).invalid(format!("reading {}", path.display()))?;
            let cells: Vec<CellId> =
                serde_json::from_str(&text).invalid(format!("parsing {}", path.display()))?;
            for c in &cells {
                self.schema.require_cell(c).invalid("target file")?;
            }
            if cells.is_empty() {
                return Err(invalid("target file lists no cells"));
            }
            return Ok(cells);
        }
        if corpus.iter().any(|r| r.gold.is_none()) {
            warn!("corpus is not fully annotated; predicting every cell");
            return Ok(self.schema.cells().to_vec());
        }
        let targets = filter_targets(&self.gold(corpus)?, args.min_positives);
        if targets.is_empty() {
            return Err(invalid(format!(
                "no cell has at least {} positives",
                args.min_positives
            )));
        }
        info!(
            "{} targets with at least {} positives",
            targets.len(),
            args.min_positives
        );
        Ok(targets)
    }
}

fn subset(corpus: &Corpus, subset: &Subset) -> CliResult<Corpus> {
    let Some(path) = &subset.split else {
        return Ok(corpus.clone());
    };
    let text = fs::read_to_string(path).invalid(format!("reading {}", path.display()))?;
    let split: SplitAssignment =
        serde_json::from_str(&text).invalid(format!("parsing {}", path.display()))?;
    let ids = match subset.side {
        Side::Train => split.train_ids,
        Side::Test => split.test_ids,
    };
    let known: HashSet<&str> = corpus.iter().map(|r| r.report_id.as_str()).collect();
    if let Some(missing) = ids.iter().find(|id| !known.contains(id.as_str())) {
        return Err(invalid(format!(
            "split references unknown report {missing}"
        )));
    }
    Ok(corpus.subset(&ids.into_iter().collect()))
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let ctx = Context::load(&cli.global)?;
    let name = match &cli.command {
        Command::Synth(_) => "synth",
        Command::Pairgen(_) => "pairgen",
        Command::Split(_) => "split",
        Command::TuneSet(_) => "tune-set",
        Command::Infer(_) => "infer",
        Command::Eval(_) => "eval",
        Command::Analyze(_) => "analyze",
    };
    let prov = Provenance::new(name, cli);
    match &cli.command {
        Command::Synth(a) => synth(&ctx, a, &prov),
        Command::Pairgen(a) => pairgen(&ctx, a, &prov),
        Command::Split(a) => split(&ctx, a, &prov),
        Command::TuneSet(a) => tune_set(&ctx, a, &prov),
        Command::Infer(a) => infer(&ctx, a, &prov),
        Command::Eval(a) => eval(&ctx, a, &prov),
        Command::Analyze(a) => analyze(&ctx, a, &prov),
    }
}

fn synth(ctx: &Context, a: &SynthArgs, prov: &Provenance) -> CliResult<()> {
    let mut config = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).invalid(format!("reading {}", p.display()))?;
            serde_json::from_str(&text).invalid(format!("parsing {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    config.n_reports = a.n_reports;
    config.seed = a.seed;
    config.emit_sections |= a.emit_sections;
    let corpus = generate_corpus(&config, &ctx.schema).invalid("synthesis config")?;
    save_corpus(&a.out, &corpus, &ctx.schema, &prov.jsonl_header()).runtime("writing corpus")?;
    println!("wrote {} reports to {}", corpus.len(), a.out.display());
    Ok(())
}

fn pairgen(ctx: &Context, a: &PairgenArgs, prov: &Provenance) -> CliResult<()> {
    let corpus = ctx.corpus(&a.corpus)?;
    let options = SmpOptions {
        negatives_per_positive: a.ratio,
        block_same_patient: !a.no_patient_blocking,
        seed: a.seed,
    };
    let pairs = generate_smp_pairs(&corpus, &ctx.lexicon, &options).invalid("generating pairs")?;
    write_jsonl(&a.out, &prov.jsonl_header(), &pairs).runtime("writing pairs")?;
    println!("wrote {} pairs to {}", pairs.len(), a.out.display());
    Ok(())
}

fn split(ctx: &Context, a: &SplitArgs, prov: &Provenance) -> CliResult<()> {
    let corpus = ctx.corpus(&a.corpus)?;
    let gold = ctx.gold(&corpus)?;
    let split = stratified_split(&gold, a.train_fraction, a.seed).invalid("splitting")?;
    write_json(&a.out, prov, &split)?;
    println!(
        "train {} / test {} written to {}",
        split.train_ids.len(),
        split.test_ids.len(),
        a.out.display()
    );
    Ok(())
}

fn tune_set(ctx: &Context, a: &TuneSetArgs, prov: &Provenance) -> CliResult<()> {
    let corpus = ctx.corpus(&a.corpus)?;
    let targets = ctx.targets(&a.targets, &corpus)?;
    let part = subset(&corpus, &a.subset)?;
    let options = TuningOptions {
        negative_policy: match a.max_negatives {
            Some(max_per_report) => NegativePolicy::Capped { max_per_report },
            None => NegativePolicy::AllNegatives,
        },
        hierarchy_supervision: !a.no_hierarchy,
        seed: a.seed,
    };
    let set = build_tuning_set(&part, &targets, &ctx.verbalizer()?, &ctx.lexicon, &options)
        .invalid("building tuning set")?;
    write_jsonl(&a.out, &prov.jsonl_header(), &set).runtime("writing tuning set")?;
    println!(
        "wrote {} instances from {} reports to {}",
        set.len(),
        part.len(),
        a.out.display()
    );
    Ok(())
}

fn scorer(
    ctx: &Context,
    a: &InferArgs,
    corpus: &Corpus,
    targets: &[CellId],
) -> CliResult<Box<dyn Scorer>> {
    let inner: Box<dyn Scorer> = match a.scorer {
        ScorerKind::Oracle => {
            let config = OracleConfig {
                noise_epsilon: a.noise,
                seed: a.seed,
                ..OracleConfig::default()
            };
            Box::new(
                OracleScorer::from_corpus(
                    config,
                    ctx.verbalizer()?,
                    corpus,
                    &ctx.lexicon,
                    Some(targets),
                )
                .invalid("oracle scorer")?,
            )
        }
        ScorerKind::Remote => {
            let endpoint = a
                .endpoint
                .clone()
                .ok_or_else(|| invalid("remote scorer needs --endpoint or HSMP_ENDPOINT"))?;
            Box::new(
                RemoteScorer::connect(RemoteConfig {
                    endpoint,
                    max_in_flight: a.parallelism.max(1),
                    ..RemoteConfig::default()
                })
                .runtime("connecting to scoring service")?,
            )
        }
    };
    Ok(if a.cache {
        Box::new(CachedScorer::new(inner))
    } else {
        inner
    })
}

#[derive(Serialize)]
struct EfficiencySummary {
    runs: Vec<EfficiencyReport>,
}

fn infer(ctx: &Context, a: &InferArgs, prov: &Provenance) -> CliResult<()> {
    let corpus = ctx.corpus(&a.corpus)?;
    let targets = ctx.targets(&a.targets, &corpus)?;
    let part = subset(&corpus, &a.subset)?;
    let verbalizer = ctx.verbalizer()?;
    let scorer = scorer(ctx, a, &part, &targets)?;
    let config = InferenceConfig {
        threshold: a.threshold,
        parallelism: a.parallelism,
        max_failure_fraction: a.max_failure_fraction,
        ..InferenceConfig::default()
    };
    let engine = InferenceEngine::new(scorer.as_ref(), &verbalizer, &ctx.lexicon, &targets, config)
        .invalid("inference configuration")?;
    let modes: &[InferenceMode] = match a.mode {
        ModeArg::Flat => &[InferenceMode::Flat],
        ModeArg::Hierarchical => &[InferenceMode::Hierarchical],
        ModeArg::Both => &[InferenceMode::Flat, InferenceMode::Hierarchical],
    };
    ensure_dir(&a.out)?;
    let header = prov.jsonl_header();
    let mut runs: Vec<EfficiencyReport> = Vec::new();
    for &mode in modes {
        let run = engine
            .run_corpus(&part, mode)
            .runtime(format!("{mode} inference"))?;
        write_jsonl(
            &a.out.join(format!("predictions.{mode}.jsonl")),
            &header,
            &run.predictions,
        )
        .runtime("writing predictions")?;
        write_jsonl(
            &a.out.join(format!("traces.{mode}.jsonl")),
            &header,
            &run.traces,
        )
        .runtime("writing traces")?;
        if !run.failures.is_empty() {
            write_jsonl(
                &a.out.join(format!("failures.{mode}.jsonl")),
                &header,
                &run.failures,
            )
            .runtime("writing failures")?;
        }
        let mut eff = run.efficiency;
        if let Some(flat) = runs.iter().find(|r| r.mode == InferenceMode::Flat) {
            eff = eff.with_baseline(flat);
        }
        println!(
            "{mode}: {} reports, {} calls, {} pairs, {} tokens, {} failed",
            eff.reports,
            eff.calls,
            eff.pairs,
            eff.tokens,
            run.failures.len()
        );
        runs.push(eff);
    }
    if let Some(folds) = runs.last().and_then(|r| r.baseline_folds.as_ref()) {
        let show = |f: Option<f64>| f.map_or("n/a".to_string(), |v| format!("{v:.2}x"));
        println!(
            "flat / hierarchical: calls {}, pairs {}, tokens {}",
            show(folds.calls),
            show(folds.pairs),
            show(folds.tokens)
        );
    }
    write_json(
        &a.out.join("efficiency.json"),
        prov,
        &EfficiencySummary { runs },
    )
}

#[derive(Serialize)]
struct NamedEvaluation {
    name: String,
    path: String,
    #[serde(flatten)]
    evaluation: Evaluation,
}

#[derive(Serialize)]
struct EvalOutput {
    targets: Vec<CellId>,
    methods: Vec<NamedEvaluation>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    significance: Vec<SignificanceRow>,
}

fn read_predictions(path: &Path) -> CliResult<Vec<PredictionRow>> {
    read_jsonl(path).invalid(format!("reading predictions {}", path.display()))
}

fn eval(ctx: &Context, a: &EvalArgs, prov: &Provenance) -> CliResult<()> {
    let corpus = ctx.corpus(&a.corpus)?;
    let gold = ctx.gold(&corpus)?;
    let targets = ctx.targets(&a.targets, &corpus)?;
    let mut methods = Vec::new();
    for path in &a.predictions {
        let rows = read_predictions(path)?;
        let evaluation = evaluate(&rows, &gold, &targets, a.auc)
            .invalid(format!("evaluating {}", path.display()))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        println!(
            "{name}: macro F1 {} ± {}, kappa {} ± {}",
            evaluation.macro_metrics.f1.mean,
            evaluation.macro_metrics.f1.sd,
            evaluation.macro_metrics.cohens_kappa.mean,
            evaluation.macro_metrics.cohens_kappa.sd
        );
        methods.push(NamedEvaluation {
            name,
            path: path.display().to_string(),
            evaluation,
        });
    }
    let significance = if methods.len() > 1 {
        let per_method: Vec<_> = methods
            .iter()
            .map(|m| {
                (
                    m.name.clone(),
                    m.evaluation.per_label.iter().map(|l| l.metrics).collect(),
                )
            })
            .collect();
        significance_table(&per_method, &["accuracy", "f1", "cohens_kappa"])
            .invalid("paired tests")?
    } else {
        Vec::new()
    };
    write_json(
        &a.out,
        prov,
        &EvalOutput {
            targets,
            methods,
            significance,
        },
    )
}

fn analyze(ctx: &Context, a: &AnalyzeArgs, prov: &Provenance) -> CliResult<()> {
    let corpus = ctx.corpus(&a.corpus)?;
    let (rows, targets) = match &a.predictions {
        Some(p) => {
            let rows = read_predictions(p)?;
            let targets: Vec<CellId> = rows
                .first()
                .map(|r| r.cells.keys().cloned().collect())
                .ok_or_else(|| invalid("prediction file is empty"))?;
            (rows, targets)
        }
        None => {
            let targets = ctx.targets(&a.targets, &corpus)?;
            (
                gold_rows(&corpus, &ctx.schema, &targets).invalid("gold rows")?,
                targets,
            )
        }
    };
    let demo = demographics(&corpus);
    let comments = prov.csv_comments();
    ensure_dir(&a.out)?;

    let involvement = organ_involvement(&rows, &ctx.schema).invalid("organ involvement")?;
    write_involvement_csv(
        &a.out.join("organ_involvement.csv"),
        &comments,
        &involvement,
    )
    .runtime("writing organ involvement")?;

    let strata = StrataConfig {
        per_patient: a.per_patient,
        ..StrataConfig::default()
    };
    let prevalence =
        stratified_prevalence(&rows, &demo, &ctx.schema, &strata).invalid("prevalence")?;
    write_prevalence_csv(&a.out.join("prevalence.csv"), &comments, &prevalence)
        .runtime("writing prevalence")?;

    let matrix = correlation_matrix(&rows, &targets, &ctx.schema).invalid("correlation")?;
    write_correlation_csv(&a.out.join("correlation.csv"), &comments, &matrix)
        .runtime("writing correlation")?;

    println!(
        "analyzed {} reports over {} targets into {}",
        rows.len(),
        targets.len(),
        a.out.display()
    );
    Ok(())
}
