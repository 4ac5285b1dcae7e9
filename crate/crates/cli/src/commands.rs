use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hiertag_core::corpus::{generate_synthetic, Corpus, GenConfig};
use hiertag_core::experiments::{
    build_plan, emit_table, read_records, render_chart, run_plan, sort_records, write_records, ExperimentPlan,
    ExperimentSet, ExtraSource, PlanData, PlanOverrides, RunRecord,
};
use hiertag_core::model::{load_checkpoint, save_checkpoint, HierModel, ModelConfig};
use hiertag_core::training::{
    score_corpus, split_dev, train as run_training, write_history_csv, LossSpec, TrainConfig, Variation,
};

use crate::config::{flatten, gather, overlay, reject_leftovers, Flat};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::ConfigArgs;

const SEED_ENV: &str = "HIERTAG_SEED";

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn read_corpus(path: &Path) -> CliResult<Corpus> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Corpus::parse_bio(BufReader::new(file), path.display().to_string())
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_corpus(corpus: &Corpus, path: &Path) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    corpus.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(())
}

fn make_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))
}

/// Puts the seed under `key`: the flag wins, then the config, then the
/// environment. Returns the resolved seed (0 when none is given).
fn resolve_seed(flag: Option<u64>, flat: &mut Flat, key: &str) -> CliResult<u64> {
    if let Some(s) = flag {
        flat.insert(key.to_string(), s.to_string());
    } else if !flat.contains_key(key) {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let s: u64 = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not a seed")))?;
            flat.insert(key.to_string(), s.to_string());
        }
    }
    match flat.get(key) {
        None => Ok(0),
        Some(v) => v.parse().map_err(|_| CliError::Usage(format!("{key}: {v:?} is not a seed"))),
    }
}

pub fn gen_synth(args: &ConfigArgs, out: &Path) -> CliResult<()> {
    let mut flat = gather(args.config.as_deref(), &args.params)?;
    let seed = resolve_seed(args.seed, &mut flat, "seed")?;
    flat.remove("seed");
    let cfg: GenConfig = overlay(&GenConfig::default(), "", &mut flat)?;
    cfg.validate()?;
    let data = generate_synthetic(&cfg, seed)?;
    make_dir(out)?;
    let mut resolved = flatten("", &cfg);
    resolved.insert("seed".into(), seed.to_string());
    let manifest = RunManifest::start("gen-synth", seed, resolved);
    let files = ["train.jsonl", "negatives.jsonl", "test.jsonl"];
    for (name, corpus) in files.iter().zip([&data.train, &data.negatives, &data.test]) {
        write_corpus(corpus, &out.join(name))?;
    }
    manifest.finish(out, &files, None)?;
    println!(
        "wrote {} train, {} negative and {} test documents to {}",
        data.train.len(),
        data.negatives.len(),
        data.test.len(),
        out.display()
    );
    Ok(())
}

pub fn derive_coarse(corpus: &Path, coarse_only: bool, out: &Path) -> CliResult<()> {
    let mut manifest = RunManifest::start(
        "derive-coarse",
        0,
        Flat::from([("coarse_only".to_string(), coarse_only.to_string())]),
    );
    manifest.input("corpus", corpus)?;
    let mut derived = read_corpus(corpus)?.derive_coarse_labels()?;
    if coarse_only {
        derived.documents = derived.documents.into_iter().map(|d| d.into_coarse(true)).collect();
    }
    make_dir(out)?;
    write_corpus(&derived, &out.join("coarse.jsonl"))?;
    manifest.finish(out, &["coarse.jsonl"], None)?;
    let positive = derived.documents.iter().filter(|d| d.gold_positive == Some(true)).count();
    println!("{} documents, {positive} positive", derived.len());
    Ok(())
}

pub fn validate(corpora: &[PathBuf], config: Option<&Path>) -> CliResult<()> {
    for path in corpora {
        let c = read_corpus(path)?;
        let annotated = c.documents.iter().filter(|d| d.has_token_annotations).count();
        let positive = c.documents.iter().filter(|d| d.gold_positive == Some(true)).count();
        let tokens: usize = c.documents.iter().map(|d| d.token_count()).sum();
        println!(
            "{}: {} documents, {} sentences, {tokens} tokens, {annotated} token-annotated, {positive} positive",
            path.display(),
            c.len(),
            c.sentence_count()
        );
    }
    if let Some(path) = config {
        let args = TrainArgs {
            cfg: ConfigArgs {
                config: Some(path.to_path_buf()),
                ..ConfigArgs::default()
            },
            ..TrainArgs::default()
        };
        let r = resolve_training(&args)?;
        println!("{}: ok ({} keys)", path.display(), r.flat.len());
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct TrainArgs {
    pub corpus: PathBuf,
    pub dev: Option<PathBuf>,
    pub variation: Option<String>,
    pub preset: Option<String>,
    pub epochs: Option<usize>,
    pub cfg: ConfigArgs,
}

struct ResolvedTraining {
    model: ModelConfig,
    train: TrainConfig,
    spec: LossSpec,
    flat: Flat,
}

fn base_model(preset: Option<String>, flat: &mut Flat) -> CliResult<ModelConfig> {
    let from_config = flat.remove("model.preset");
    match preset.or(from_config) {
        None => Ok(ModelConfig::default()),
        Some(name) => ModelConfig::preset(&name).ok_or_else(|| CliError::Usage(format!("unknown model preset {name:?}"))),
    }
}

fn resolve_training(args: &TrainArgs) -> CliResult<ResolvedTraining> {
    let c = &args.cfg;
    let mut flat = gather(c.config.as_deref(), &c.params)?;
    resolve_seed(c.seed, &mut flat, "train.seed")?;
    if let Some(e) = args.epochs {
        flat.insert("train.epochs".into(), e.to_string());
    }
    let variation_text = args.variation.clone().or_else(|| flat.remove("variation"));
    flat.remove("variation");
    let variation: Variation = match variation_text {
        Some(v) => v.parse()?,
        None => Variation::Baseline,
    };
    let model_base = base_model(args.preset.clone(), &mut flat)?;
    let model: ModelConfig = overlay(&model_base, "model", &mut flat)?;
    let train: TrainConfig = overlay(&TrainConfig::default(), "train", &mut flat)?;
    let spec: LossSpec = overlay(&LossSpec::for_variation(variation), "loss", &mut flat)?;
    reject_leftovers(&flat)?;
    model.validate()?;
    train.validate()?;
    spec.validate()?;
    let mut resolved = flatten("model", &model);
    resolved.extend(flatten("train", &train));
    resolved.extend(flatten("loss", &spec));
    resolved.insert("variation".into(), variation.label().into());
    Ok(ResolvedTraining {
        model,
        train,
        spec,
        flat: resolved,
    })
}

pub fn train(args: &TrainArgs, out: &Path) -> CliResult<()> {
    let r = resolve_training(args)?;
    let mut manifest = RunManifest::start("train", r.train.seed, r.flat.clone());
    manifest.input("corpus", &args.corpus)?;
    let corpus = read_corpus(&args.corpus)?;
    let (train_set, dev_set) = match &args.dev {
        Some(p) => {
            manifest.input("dev", p)?;
            (corpus, read_corpus(p)?)
        }
        None => split_dev(&corpus, r.train.dev_fraction, r.train.seed)?,
    };
    let model = HierModel::new(r.model.clone(), r.train.seed)?;
    make_dir(out)?;
    let outcome = match run_training(model, &train_set, &dev_set, &r.spec, &r.train) {
        Ok(o) => o,
        Err(e) => {
            let err = CliError::from(e);
            manifest.finish(out, &[], Some(err.to_string()))?;
            return Err(err);
        }
    };
    save_checkpoint(&outcome.model, &out.join("model.ckpt"))?;
    let mut w = BufWriter::new(File::create(out.join("history.csv"))?);
    write_history_csv(&outcome.history, &mut w)?;
    w.flush()?;
    manifest.finish(out, &["model.ckpt", "history.csv"], None)?;
    println!(
        "best epoch {} with dev F1 {:.2}; {} train and {} dev documents",
        outcome.best_epoch,
        outcome.best_dev_f1,
        train_set.len(),
        dev_set.len()
    );
    Ok(())
}

pub fn score(checkpoint: &Path, corpus: &Path, out: Option<&Path>) -> CliResult<()> {
    let model = load_checkpoint(checkpoint).map_err(|e| CliError::Usage(format!("{}: {e}", checkpoint.display())))?;
    let test = read_corpus(corpus)?;
    let report = score_corpus(&model, &test)?;
    let tsv = report.to_tsv();
    print!("{tsv}");
    if let Some(dir) = out {
        let mut manifest = RunManifest::start("score", 0, Flat::new());
        manifest.input("checkpoint", checkpoint)?;
        manifest.input("corpus", corpus)?;
        make_dir(dir)?;
        fs::write(dir.join("scores.tsv"), &tsv)?;
        manifest.finish(dir, &["scores.tsv"], None)?;
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct ExperimentArgs {
    pub set: Option<String>,
    pub data: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub negatives: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub seeds: Option<usize>,
    pub jobs: usize,
    pub reuse: Option<PathBuf>,
    pub cfg: ConfigArgs,
}

fn data_file(explicit: &Option<PathBuf>, dir: &Option<PathBuf>, name: &str, flag: &str) -> CliResult<PathBuf> {
    match (explicit, dir) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(d)) => Ok(d.join(format!("{name}.jsonl"))),
        (None, None) => usage(format!("give --{flag} or --data")),
    }
}

fn parse_list<T>(key: &str, text: &str, item: impl Fn(&str) -> Option<T>) -> CliResult<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| item(p).ok_or_else(|| CliError::Usage(format!("{key}: cannot read {p:?}"))))
        .collect()
}

fn parse_value<T: std::str::FromStr>(key: &str, text: &str) -> CliResult<T> {
    text.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{key}: cannot read {text:?}")))
}

fn parse_extra(text: &str) -> CliResult<ExtraSource> {
    match text.trim() {
        "none" => Ok(ExtraSource::None),
        "discarded_complement" => Ok(ExtraSource::DiscardedComplement),
        other => match other.strip_prefix("fixed:") {
            Some(n) => Ok(ExtraSource::Fixed(parse_value("plan.extra", n)?)),
            None => usage(format!("plan.extra: expected none, discarded_complement or fixed:N, got {other:?}")),
        },
    }
}

fn extra_text(e: ExtraSource) -> String {
    match e {
        ExtraSource::None => "none".into(),
        ExtraSource::DiscardedComplement => "discarded_complement".into(),
        ExtraSource::Fixed(n) => format!("fixed:{n}"),
    }
}

fn plan_overrides(flat: &mut Flat) -> CliResult<PlanOverrides> {
    let mut o = PlanOverrides::default();
    let keys: Vec<String> = flat.keys().filter(|k| k.starts_with("plan.")).cloned().collect();
    for key in keys {
        let v = flat.remove(&key).expect("listed");
        match &key["plan.".len()..] {
            "schedule" => o.schedule = Some(parse_list(&key, &v, |p| p.parse().ok())?),
            "extra" => o.extra = Some(parse_extra(&v)?),
            "negatives" => o.negatives = Some(parse_value(&key, &v)?),
            "negatives_sentence_labels" => o.negatives_sentence_labels = Some(parse_value(&key, &v)?),
            "extra_sentence_labels" => o.extra_sentence_labels = Some(parse_value(&key, &v)?),
            "variations" => o.variations = Some(parse_list(&key, &v, |p| p.parse().ok())?),
            "seeds" => o.seeds = Some(parse_value(&key, &v)?),
            "base_seed" => o.base_seed = Some(parse_value(&key, &v)?),
            "data_seed" => o.data_seed = Some(parse_value(&key, &v)?),
            _ => return usage(format!("unknown config key {key}")),
        }
    }
    Ok(o)
}

fn plan_flat(plan: &ExperimentPlan) -> Flat {
    let list = |xs: Vec<String>| xs.join(",");
    let mut f = Flat::from([
        ("set".to_string(), plan.set.id().to_string()),
        ("plan.schedule".into(), list(plan.schedule.iter().map(|k| k.to_string()).collect())),
        ("plan.extra".into(), extra_text(plan.extra)),
        ("plan.negatives".into(), plan.negatives.to_string()),
        ("plan.negatives_sentence_labels".into(), plan.negatives_sentence_labels.to_string()),
        ("plan.extra_sentence_labels".into(), plan.extra_sentence_labels.to_string()),
        ("plan.variations".into(), list(plan.variations.iter().map(|v| v.label().to_string()).collect())),
        ("plan.seeds".into(), plan.seeds.to_string()),
        ("plan.base_seed".into(), plan.base_seed.to_string()),
        ("plan.data_seed".into(), plan.data_seed.to_string()),
    ]);
    f.extend(flatten("model", &plan.model));
    f.extend(flatten("train", &plan.train));
    f
}

fn load_records(path: &Path) -> CliResult<Vec<RunRecord>> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    read_records(BufReader::new(file)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn reused_records(path: &Path, plan: &ExperimentPlan) -> CliResult<Vec<RunRecord>> {
    if plan.set != ExperimentSet::Two {
        return usage("--reuse only completes set 2 tables");
    }
    let records = load_records(path)?;
    if let Some(r) = records.iter().find(|r| r.set != ExperimentSet::One) {
        return usage(format!("{}: reused records must come from set 1, found set {}", path.display(), r.set));
    }
    Ok(records
        .into_iter()
        .filter(|r| matches!(r.variation, Variation::Baseline | Variation::Sent) && plan.schedule.contains(&r.kept))
        .collect())
}

/// Writes records, table and chart; the table and chart are skipped when
/// there is nothing to show.
fn write_results(dir: &Path, own: &[RunRecord], shown: &[RunRecord]) -> CliResult<Option<String>> {
    let mut w = BufWriter::new(File::create(dir.join("records.jsonl"))?);
    write_records(own, &mut w)?;
    w.flush()?;
    if shown.is_empty() {
        return Ok(None);
    }
    let table = emit_table(shown)?;
    fs::write(dir.join("table.tsv"), &table)?;
    fs::write(dir.join("chart.svg"), render_chart(shown)?)?;
    Ok(Some(table))
}

const RESULT_FILES: [&str; 3] = ["records.jsonl", "table.tsv", "chart.svg"];

pub fn experiment(args: &ExperimentArgs, out: &Path) -> CliResult<()> {
    let c = &args.cfg;
    let mut flat = gather(c.config.as_deref(), &c.params)?;
    resolve_seed(c.seed, &mut flat, "plan.base_seed")?;
    if let Some(s) = args.seeds {
        flat.insert("plan.seeds".into(), s.to_string());
    }
    let set_text = args.set.clone().or_else(|| flat.get("set").cloned());
    flat.remove("set");
    let set: ExperimentSet = match set_text {
        Some(s) => s.parse()?,
        None => return usage("give --set"),
    };
    let model_base = base_model(None, &mut flat)?;
    let mut overrides = plan_overrides(&mut flat)?;
    overrides.model = Some(overlay(&model_base, "model", &mut flat)?);
    overrides.train = Some(overlay(&TrainConfig::default(), "train", &mut flat)?);
    reject_leftovers(&flat)?;

    let paths = [
        ("corpus", data_file(&args.corpus, &args.data, "train", "corpus")?),
        ("negatives", data_file(&args.negatives, &args.data, "negatives", "negatives")?),
        ("test", data_file(&args.test, &args.data, "test", "test")?),
    ];
    let [corpus, pool, test] = [&paths[0].1, &paths[1].1, &paths[2].1].map(|p| read_corpus(p));
    let (corpus, pool, test) = (corpus?, pool?, test?);
    let plan = build_plan(set, corpus.len(), &overrides)?;
    let reused = match &args.reuse {
        Some(p) => reused_records(p, &plan)?,
        None => Vec::new(),
    };

    let mut manifest = RunManifest::start("experiment", plan.base_seed, plan_flat(&plan));
    for (role, p) in &paths {
        manifest.input(role, p)?;
    }
    if let Some(p) = &args.reuse {
        manifest.input("reuse", p)?;
    }
    make_dir(out)?;
    let data = PlanData {
        corpus: &corpus,
        negative_pool: &pool,
        test: &test,
    };
    let (own, failure) = match run_plan(&plan, data, args.jobs) {
        Ok(records) => (records, None),
        Err(f) => {
            log::error!(
                "cell kept {} {} repeat {} failed after {} finished cells",
                f.cell.kept,
                f.cell.variation,
                f.cell.repeat,
                f.records.len()
            );
            (f.records, Some(f.error))
        }
    };
    let mut shown = own.clone();
    shown.extend(reused);
    sort_records(&mut shown);
    let table = write_results(out, &own, &shown)?;
    match failure {
        None => {
            manifest.finish(out, &RESULT_FILES, None)?;
            if let Some(t) = table {
                print!("{t}");
            }
            Ok(())
        }
        Some(e) => {
            let err = CliError::from(e);
            manifest.finish(out, &RESULT_FILES, Some(err.to_string()))?;
            Err(err)
        }
    }
}

pub fn plot(records: &[PathBuf], out: &Path) -> CliResult<()> {
    let mut manifest = RunManifest::start("plot", 0, Flat::new());
    let mut all = Vec::new();
    for (i, p) in records.iter().enumerate() {
        manifest.input(&format!("records.{i}"), p)?;
        all.extend(load_records(p)?);
    }
    if all.is_empty() {
        return usage("no records to plot");
    }
    sort_records(&mut all);
    make_dir(out)?;
    let table = emit_table(&all)?;
    fs::write(out.join("table.tsv"), &table)?;
    fs::write(out.join("chart.svg"), render_chart(&all)?)?;
    manifest.finish(out, &["table.tsv", "chart.svg"], None)?;
    print!("{table}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_keys_round_trip() {
        let mut flat = Flat::from([
            ("plan.schedule".to_string(), "8,4".to_string()),
            ("plan.extra".to_string(), "fixed:2".to_string()),
            ("plan.variations".to_string(), "baseline,sent+doc".to_string()),
        ]);
        let o = plan_overrides(&mut flat).unwrap();
        assert!(flat.is_empty());
        assert_eq!(o.schedule, Some(vec![8, 4]));
        assert_eq!(o.extra, Some(ExtraSource::Fixed(2)));
        assert_eq!(o.variations, Some(vec![Variation::Baseline, Variation::SentDoc]));
        let plan = build_plan(ExperimentSet::ThreeOne, 10, &o).unwrap();
        let mut again = plan_flat(&plan);
        again.remove("set");
        let model_base = base_model(None, &mut again).unwrap();
        let mut o2 = plan_overrides(&mut again).unwrap();
        o2.model = Some(overlay(&model_base, "model", &mut again).unwrap());
        o2.train = Some(overlay(&TrainConfig::default(), "train", &mut again).unwrap());
        assert!(again.is_empty());
        assert_eq!(build_plan(ExperimentSet::ThreeOne, 10, &o2).unwrap(), plan);
    }

    #[test]
    fn training_defaults_and_variation_gates() {
        let r = resolve_training(&TrainArgs {
            cfg: ConfigArgs {
                seed: Some(1),
                ..ConfigArgs::default()
            },
            ..TrainArgs::default()
        })
        .unwrap();
        assert_eq!(r.train.epochs, 30);
        assert_eq!(r.spec, LossSpec::for_variation(Variation::Baseline));
        for v in Variation::ALL {
            let r = resolve_training(&TrainArgs {
                variation: Some(v.label().to_string()),
                cfg: ConfigArgs {
                    seed: Some(1),
                    ..ConfigArgs::default()
                },
                ..TrainArgs::default()
            })
            .unwrap();
            assert_eq!(r.spec, LossSpec::for_variation(v));
            assert_eq!(r.flat["variation"], v.label());
        }
    }

    #[test]
    fn bad_plan_values_are_usage_errors() {
        for (k, v) in [("plan.extra", "some"), ("plan.seeds", "x"), ("plan.bogus", "1")] {
            let mut flat = Flat::from([(k.to_string(), v.to_string())]);
            assert!(matches!(plan_overrides(&mut flat), Err(CliError::Usage(_))));
        }
    }
}
