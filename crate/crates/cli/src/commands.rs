//! Subcommand implementations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;

use anyhow::anyhow;
use pte_core::benchmark::{read_forest, train_forest, write_forest, BenchmarkError, TrainingSet};
use pte_core::ids::{ItemId, Question};
use pte_core::ledger::{
    finalized_corpus, replay as replay_ledger, score_all, ItemKind, LedgerError, LedgerState, ReplayConfig,
    ScoringOptions,
};
use pte_core::mechanism::{MechanismError, ScoreStatus};
use pte_core::rng::derive_seed;
use pte_core::scoring::Mechanism;
use pte_core::sim::{convergence_curve, run_experiment, SimError};

use crate::config::{self, SimulateConfig, TrainConfig, DEFAULT_SIMULATE};
use crate::output::{num, write_file, Table};
use crate::{Common, Failure, LogArgs};

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::InvalidWorld(_)
        | SimError::InvalidStrategy(_)
        | SimError::InvalidConfig(_)
        | SimError::NotSelfPredicting(_)
        | SimError::Benchmark(BenchmarkError::InvalidConfig(_) | BenchmarkError::InvalidEpsilon { .. })
        | SimError::Mechanism(MechanismError::InvalidParams(_)) => Failure::config(e),
        _ => Failure::runtime(e),
    }
}

fn ledger_failure(e: LedgerError) -> Failure {
    match e {
        LedgerError::InvalidWeights(_)
        | LedgerError::Benchmark(BenchmarkError::InvalidConfig(_) | BenchmarkError::InvalidEpsilon { .. })
        | LedgerError::Mechanism(MechanismError::InvalidParams(_)) => Failure::config(e),
        _ => Failure::runtime(e),
    }
}

pub fn simulate(c: &Common) -> Result<(), Failure> {
    let mut cfg: SimulateConfig = match &c.config {
        Some(path) => config::load(Some(path))?,
        None => config::parse(DEFAULT_SIMULATE, "built-in default config")?,
    };
    if cfg.experiment.is_none() && cfg.convergence.is_none() {
        return Err(Failure::config(anyhow!("config defines neither `experiment` nor `convergence`")));
    }
    let mut table = Table::new(vec!["mechanism", "strategy", "N", "mean", "stderr", "reps"]);
    if let Some(exp) = cfg.experiment.as_mut() {
        if let Some(seed) = c.seed {
            exp.world.seed = seed;
        }
        if let Some(m) = c.mechanism {
            exp.mechanism = m;
        }
        log::info!("running {} replications", exp.replications);
        let result = run_experiment(exp).map_err(sim_failure)?;
        for s in &result.strategies {
            table.push(vec![
                result.mechanism.to_string(),
                s.name.clone(),
                s.ratings.to_string(),
                num(s.summary.mean),
                num(s.summary.stderr),
                result.replications.to_string(),
            ]);
        }
    }
    if let Some(conv) = cfg.convergence.as_mut() {
        if let Some(seed) = c.seed {
            conv.world.seed = seed;
        }
        if let Some(m) = c.mechanism {
            conv.mechanism = m;
        }
        log::info!("running convergence schedule {:?}", conv.schedule);
        let name = conv.strategy.display_name();
        for p in convergence_curve(conv).map_err(sim_failure)? {
            table.push(vec![
                conv.mechanism.to_string(),
                name.clone(),
                p.n.to_string(),
                num(p.summary.mean),
                num(p.summary.stderr),
                p.summary.count.to_string(),
            ]);
        }
    }
    if let Some(dir) = &c.out {
        write_file(dir, "summary.txt", table.to_text().as_bytes())?;
    }
    table.emit(c.format, c.out.as_deref(), "results")
}

fn effective_mechanism(item: Mechanism, over: Option<Mechanism>) -> Mechanism {
    match (item, over) {
        (Mechanism::Quadratic, _) | (_, None) | (_, Some(Mechanism::Quadratic)) => item,
        (_, Some(m)) => m,
    }
}

/// Finalized ratings available to train a per-item benchmark.
fn corpus_size(state: &LedgerState) -> usize {
    [
        (ItemKind::Project, Question::CONTRIBUTION),
        (ItemKind::Project, Question::DESIGN),
        (ItemKind::Report, Question::CONTRIBUTION),
    ]
    .into_iter()
    .map(|(k, q)| finalized_corpus(state, k, q).len())
    .sum()
}

pub fn score(a: &LogArgs) -> Result<(), Failure> {
    let c = &a.common;
    let cfg: ReplayConfig = config::load(c.config.as_deref())?;
    let ledger = config::load_log(&a.log)?;
    let forest = match &a.forest {
        None => None,
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| Failure::config(anyhow!("cannot open forest {}: {e}", path.display())))?;
            Some(read_forest(BufReader::new(file)).map_err(|e| Failure::config(anyhow!("{}: {e}", path.display())))?)
        }
    };
    let state = ledger.state();
    let needs_benchmark = state
        .items()
        .values()
        .any(|i| effective_mechanism(i.mechanism, c.mechanism) == Mechanism::Augmented);
    if needs_benchmark && forest.is_none() && corpus_size(state) == 0 {
        return Err(Failure::runtime(anyhow!(
            "augmented scoring needs a forest file or finalized ratings to train one, and {} has none",
            a.log.display()
        )));
    }
    let options = ScoringOptions {
        mechanism: c.mechanism,
        forest: forest.as_ref(),
        strict: false,
    };
    let records = score_all(state, &cfg, c.seed.unwrap_or(0), options).map_err(ledger_failure)?;
    let mut table = Table::new(vec!["rater", "item", "kind", "question", "mechanism", "score", "status"]);
    for r in records {
        table.push(vec![
            r.rater.to_string(),
            r.item.to_string(),
            match r.kind {
                ItemKind::Project => "project",
                ItemKind::Report => "report",
            }
            .into(),
            r.question.map(|q| q.to_string()).unwrap_or_default(),
            r.mechanism.to_string(),
            num(r.value),
            match r.status {
                ScoreStatus::Pending => "pending",
                ScoreStatus::Provisional => "provisional",
                ScoreStatus::Final => "final",
            }
            .into(),
        ]);
    }
    table.emit(c.format, c.out.as_deref(), "scores")
}

pub fn replay(a: &LogArgs) -> Result<(), Failure> {
    let c = &a.common;
    if c.mechanism.is_some() || a.forest.is_some() {
        return Err(Failure::config(anyhow!(
            "replay scores every item with its own mechanism; --mechanism and --forest apply to `score`"
        )));
    }
    let cfg: ReplayConfig = config::load(c.config.as_deref())?;
    let ledger = config::load_log(&a.log)?;
    let rep = replay_ledger(&ledger, &cfg, c.seed.unwrap_or(0)).map_err(ledger_failure)?;
    let mut table = Table::new(vec!["user", "r0", "rp", "rr", "ep", "er", "total"]);
    for (user, r) in &rep.users {
        table.push(vec![
            user.to_string(),
            num(r.r0),
            num(r.rp),
            num(r.rr),
            num(r.ep),
            num(r.er),
            num(r.total),
        ]);
    }
    table.emit(c.format, c.out.as_deref(), "reputation")
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Held-out calibration: L1 distance between the mean predicted label
/// distribution and the observed label frequencies of held-out rows.
fn held_out_l1(forest: &pte_core::benchmark::Forest, rows: &TrainingSet) -> Result<f64, BenchmarkError> {
    let m = rows.labels().len();
    let mut predicted = vec![0.0; m];
    let mut observed = vec![0.0; m];
    for row in rows.rows() {
        for (acc, p) in predicted.iter_mut().zip(forest.predict_proba(&row.descriptors)?) {
            *acc += p;
        }
        observed[row.label.index()] += 1.0;
    }
    let n = rows.len() as f64;
    predicted.iter_mut().chain(observed.iter_mut()).for_each(|x| *x /= n);
    Ok(l1(&predicted, &observed))
}

pub fn train_benchmark(a: &LogArgs) -> Result<(), Failure> {
    let c = &a.common;
    if c.mechanism.is_some() || a.forest.is_some() {
        return Err(Failure::config(anyhow!("train-benchmark takes neither --mechanism nor --forest")));
    }
    let mut cfg: TrainConfig = config::load(c.config.as_deref())?;
    if !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(Failure::config(anyhow!(
            "holdout_fraction must lie in [0, 1), got {}",
            cfg.holdout_fraction
        )));
    }
    if let Some(seed) = c.seed {
        cfg.forest.seed = seed;
    }
    cfg.forest.validate().map_err(Failure::config)?;
    let ledger = config::load_log(&a.log)?;
    let corpus = finalized_corpus(ledger.state(), cfg.kind, cfg.question);
    if corpus.is_empty() {
        return Err(Failure::runtime(anyhow!("{}: {}", a.log.display(), BenchmarkError::EmptyTrainingSet)));
    }
    let items: BTreeSet<ItemId> = corpus.rows().iter().map(|r| r.item).collect();
    let held: BTreeSet<ItemId> = items
        .iter()
        .copied()
        .filter(|i| (derive_seed(cfg.forest.seed, &[i.0]) as f64 / u64::MAX as f64) < cfg.holdout_fraction)
        .collect();
    let mut train = TrainingSet::new(corpus.schema().clone(), corpus.labels().clone());
    let mut test = TrainingSet::new(corpus.schema().clone(), corpus.labels().clone());
    for row in corpus.rows() {
        let target = if held.contains(&row.item) { &mut test } else { &mut train };
        target.push(row.clone()).map_err(Failure::runtime)?;
    }
    if train.is_empty() || test.is_empty() {
        train = corpus.clone();
        test = TrainingSet::new(corpus.schema().clone(), corpus.labels().clone());
    }
    let forest = train_forest(&train, &cfg.forest).map_err(Failure::runtime)?;
    let mut bytes = Vec::new();
    write_forest(&forest, &mut bytes).map_err(Failure::runtime)?;
    let dir = c.out.clone().unwrap_or_else(|| ".".into());
    write_file(&dir, "forest.json", &bytes)?;
    let mut table = Table::new(vec!["metric", "value"]);
    table.push(vec!["training_rows".into(), train.len().to_string()]);
    table.push(vec!["held_out_rows".into(), test.len().to_string()]);
    table.push(vec!["held_out_items".into(), if test.is_empty() { 0 } else { held.len() }.to_string()]);
    let diag = if test.is_empty() {
        String::new()
    } else {
        num(held_out_l1(&forest, &test).map_err(Failure::runtime)?)
    };
    table.push(vec!["held_out_l1".into(), diag]);
    table.push(vec!["forest".into(), dir.join("forest.json").display().to_string()]);
    table.emit(c.format, None, "training")
}

pub fn report(a: &LogArgs) -> Result<(), Failure> {
    let c = &a.common;
    if c.mechanism.is_some() || a.forest.is_some() || c.config.is_some() || c.seed.is_some() {
        return Err(Failure::config(anyhow!("report takes only --log, --out and --format")));
    }
    let ledger = config::load_log(&a.log)?;
    let state = ledger.state();
    let mut table = Table::new(vec!["metric", "value"]);
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for e in ledger.events() {
        *kinds.entry(e.body.kind()).or_default() += 1;
    }
    table.push(vec!["events".into(), ledger.len().to_string()]);
    for (k, n) in kinds {
        table.push(vec![format!("events.{k}"), n.to_string()]);
    }
    let items = state.items();
    let count = |f: &dyn Fn(&pte_core::ledger::ItemState) -> bool| items.values().filter(|i| f(i)).count();
    table.push(vec!["users".into(), state.users().len().to_string()]);
    table.push(vec!["projects".into(), count(&|i| i.kind == ItemKind::Project).to_string()]);
    table.push(vec!["reports".into(), count(&|i| i.kind == ItemKind::Report).to_string()]);
    table.push(vec![
        "quadratic_items".into(),
        count(&|i| i.mechanism == Mechanism::Quadratic).to_string(),
    ]);
    let channels: Vec<bool> = items
        .values()
        .flat_map(|i| i.channels.values().map(|ch| ch.is_finalized()))
        .collect();
    table.push(vec!["channels_finalized".into(), channels.iter().filter(|f| **f).count().to_string()]);
    table.push(vec!["channels_open".into(), channels.iter().filter(|f| !**f).count().to_string()]);
    let tokens = state.tokens();
    table.push(vec!["token_supply".into(), tokens.supply().to_string()]);
    table.push(vec!["token_holdings".into(), tokens.holdings().to_string()]);
    table.push(vec!["token_pool".into(), tokens.pool().to_string()]);
    table.push(vec![
        "token_invariants".into(),
        match tokens.check_invariants() {
            Ok(()) => "ok".into(),
            Err(e) => e,
        },
    ]);
    table.emit(c.format, c.out.as_deref(), "report")
}
