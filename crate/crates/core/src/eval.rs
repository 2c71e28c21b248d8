//! The evaluation protocol: tune proportions on training PIEs, then query
//! every eval PIE under each strategy row and tally the outcome categories.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptationPolicy, Strategy};
use crate::classify::{outcome_log_line, Category};
use crate::error::{Error, Result};
use crate::ingest::ExperimentSplit;
use crate::pipeline::Harness;
use crate::pkg::{Pkg, UserId};
use crate::tune::{tune_global, tune_user, TuneConfig, TuneResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Personalized,
    Global,
    /// Rows without a tuned proportion (prompt-only, none).
    Baseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Personalized => "personalized",
            Mode::Global => "global",
            Mode::Baseline => "baseline",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "personalized" | "personalised" | "p" => Ok(Mode::Personalized),
            "global" | "g" => Ok(Mode::Global),
            "baseline" | "n/a" | "" => Ok(Mode::Baseline),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// One row of the results table. Serialized as `strategy:mode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RowSpec {
    pub strategy: Strategy,
    pub mode: Mode,
}

impl RowSpec {
    pub const TABLE_ORDER: [RowSpec; 8] = [
        RowSpec::new(Strategy::Soft, Mode::Personalized),
        RowSpec::new(Strategy::Soft, Mode::Global),
        RowSpec::new(Strategy::Hard, Mode::Personalized),
        RowSpec::new(Strategy::Hard, Mode::Global),
        RowSpec::new(Strategy::Removal, Mode::Personalized),
        RowSpec::new(Strategy::Removal, Mode::Global),
        RowSpec::new(Strategy::PromptOnly, Mode::Baseline),
        RowSpec::new(Strategy::None, Mode::Baseline),
    ];

    pub const fn new(strategy: Strategy, mode: Mode) -> Self {
        RowSpec { strategy, mode }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategy.rewrites_pkg() == (self.mode == Mode::Baseline) {
            return Err(Error::Config(format!(
                "strategy {} cannot run in {} mode",
                self.strategy,
                self.mode.as_str()
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match (self.strategy, self.mode) {
            (Strategy::PromptOnly, _) => "Prompt-Based Adaptation".into(),
            (Strategy::None, _) => "No Adaptation".into(),
            (s, m) => {
                let name = match s {
                    Strategy::Soft => "Soft",
                    Strategy::Hard => "Hard",
                    _ => "Removal",
                };
                format!("{name} ({})", m.as_str())
            }
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        RowSpec::TABLE_ORDER
            .into_iter()
            .find(|r| r.label().eq_ignore_ascii_case(label.trim()))
            .ok_or_else(|| Error::Config(format!("unknown table row `{label}`")))
    }

    fn rank(&self) -> usize {
        RowSpec::TABLE_ORDER
            .iter()
            .position(|r| r == self)
            .unwrap_or(usize::MAX)
    }
}

impl fmt::Display for RowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl TryFrom<String> for RowSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RowSpec> for String {
    fn from(r: RowSpec) -> String {
        format!("{}:{}", r.strategy, r.mode.as_str())
    }
}

impl FromStr for RowSpec {
    type Err = Error;

    /// `strategy` or `strategy:mode`, e.g. `soft:global`, `none`.
    fn from_str(s: &str) -> Result<Self> {
        let (strategy, mode) = match s.split_once(':') {
            Some((st, m)) => (st.parse::<Strategy>()?, m.parse::<Mode>()?),
            None => {
                let st: Strategy = s.parse()?;
                let mode = if st.rewrites_pkg() {
                    Mode::Personalized
                } else {
                    Mode::Baseline
                };
                (st, mode)
            }
        };
        let row = RowSpec::new(strategy, mode);
        row.validate()?;
        Ok(row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Tallies pooled over all users, then normalized.
    #[default]
    Micro,
    /// Per-user proportions averaged over users.
    Macro,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "micro" => Ok(Aggregation::Micro),
            "macro" => Ok(Aggregation::Macro),
            other => Err(Error::Config(format!("unknown aggregation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub rows: Vec<RowSpec>,
    pub aggregation: Aggregation,
    pub tune: TuneConfig,
    /// Parallel query workers during evaluation; 1 runs everything inline.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            rows: RowSpec::TABLE_ORDER.to_vec(),
            aggregation: Aggregation::Micro,
            tune: TuneConfig::default(),
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Config("no strategy or baseline rows enabled".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        for row in &self.rows {
            row.validate()?;
        }
        self.tune.validate()
    }
}

/// Tuned proportions for one strategy.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StrategyProportions {
    pub per_user: BTreeMap<UserId, f64>,
    pub global: Option<f64>,
}

pub type Proportions = BTreeMap<Strategy, StrategyProportions>;

fn proportion_for(proportions: &Proportions, row: RowSpec, user: &UserId) -> Result<f64> {
    let missing =
        |what: String| Error::Config(format!("no tuned {what} proportion for {}", row.strategy));
    match row.mode {
        Mode::Baseline => Ok(0.0),
        Mode::Global => proportions
            .get(&row.strategy)
            .and_then(|p| p.global)
            .ok_or_else(|| missing("global".into())),
        Mode::Personalized => proportions
            .get(&row.strategy)
            .and_then(|p| p.per_user.get(user).copied())
            .ok_or_else(|| missing(format!("personalized (user {user})"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub out_pie: u64,
    pub in_pie: u64,
    pub invalid: u64,
    /// Backend failures; excluded from the proportions.
    pub failed: u64,
}

impl Counts {
    pub fn add(&mut self, category: Category) {
        match category {
            Category::OutPie => self.out_pie += 1,
            Category::InPie => self.in_pie += 1,
            Category::Invalid => self.invalid += 1,
        }
    }

    pub fn merge(&mut self, other: &Counts) {
        self.out_pie += other.out_pie;
        self.in_pie += other.in_pie;
        self.invalid += other.invalid;
        self.failed += other.failed;
    }

    pub fn classified(&self) -> u64 {
        self.out_pie + self.in_pie + self.invalid
    }

    /// `(out_pie, in_pie, invalid) / classified`; `None` when nothing was classified.
    pub fn proportions(&self) -> Option<[f64; 3]> {
        let n = self.classified();
        (n > 0).then(|| {
            let n = n as f64;
            [
                self.out_pie as f64 / n,
                self.in_pie as f64 / n,
                self.invalid as f64 / n,
            ]
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub row: RowSpec,
    pub counts: Counts,
    /// Out-PIE, In-PIE, Invalid.
    pub proportions: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// Inserts or replaces a row, keeping table order.
    pub fn insert(&mut self, row: ResultRow) {
        self.rows.retain(|r| r.row != row.row);
        self.rows.push(row);
        self.rows.sort_by_key(|r| r.row.rank());
    }

    pub fn get(&self, row: RowSpec) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.row == row)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub table: ResultTable,
    /// Outcome log lines, one per classified query, rows in table order.
    pub log: Vec<String>,
}

/// Per-user work for one row: counts plus log lines.
/// One user's tallies and outcome-log lines for a row.
type UserResult = Result<(Counts, Vec<String>)>;

fn evaluate_user(
    harness: &Harness<'_>,
    row: RowSpec,
    pkg: &Pkg,
    split: &ExperimentSplit,
    proportion: f64,
) -> UserResult {
    let policy = AdaptationPolicy::new(row.strategy, proportion)?;
    let mut counts = Counts::default();
    let mut log = Vec::with_capacity(split.eval_pies.len());
    for pie in &split.eval_pies {
        match harness.run_query(pkg, pie, &policy)? {
            Ok(outcome) => {
                counts.add(outcome.category);
                log.push(outcome_log_line(
                    &split.user_id,
                    row.strategy,
                    proportion,
                    &outcome,
                ));
            }
            Err(e) => {
                warn!("{} / {}: backend failure: {e}", row.label(), split.user_id);
                counts.failed += 1;
            }
        }
    }
    Ok((counts, log))
}

type UserJob<'a> = (&'a Pkg, &'a ExperimentSplit, f64);

fn run_jobs(
    harness: &Harness<'_>,
    row: RowSpec,
    jobs: &[UserJob<'_>],
    workers: usize,
) -> Result<Vec<(Counts, Vec<String>)>> {
    if workers <= 1 || jobs.len() <= 1 {
        return jobs
            .iter()
            .map(|&(pkg, split, p)| evaluate_user(harness, row, pkg, split, p))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<UserResult>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(pkg, split, p)) = jobs.get(i) else {
                    break;
                };
                let result = evaluate_user(harness, row, pkg, split, p);
                slots.lock().expect("worker panicked")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Queries every eval PIE of every split under each configured row.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    splits: &[ExperimentSplit],
    pkgs: &BTreeMap<UserId, Pkg>,
    proportions: &Proportions,
    harness: &Harness<'_>,
) -> Result<Evaluation> {
    cfg.validate()?;
    let mut rows = cfg.rows.clone();
    rows.sort_by_key(|r| r.rank());
    rows.dedup();

    let mut table = ResultTable::default();
    let mut log = Vec::new();
    for row in rows {
        let mut jobs = Vec::with_capacity(splits.len());
        for split in splits {
            let pkg = pkgs
                .get(&split.user_id)
                .ok_or_else(|| Error::NotFound(format!("PKG for user {}", split.user_id)))?;
            jobs.push((
                pkg,
                split,
                proportion_for(proportions, row, &split.user_id)?,
            ));
        }
        let per_user = run_jobs(harness, row, &jobs, cfg.workers)?;
        let mut counts = Counts::default();
        let mut macro_sum = [0.0; 3];
        let mut macro_users = 0usize;
        for (user_counts, user_log) in per_user {
            counts.merge(&user_counts);
            if let Some(p) = user_counts.proportions() {
                macro_sum.iter_mut().zip(p).for_each(|(s, v)| *s += v);
                macro_users += 1;
            }
            log.extend(user_log);
        }
        let proportions = match cfg.aggregation {
            Aggregation::Micro => counts.proportions(),
            Aggregation::Macro => {
                (macro_users > 0).then(|| macro_sum.map(|s| s / macro_users as f64))
            }
        };
        let Some(proportions) = proportions else {
            warn!("{}: no classified outcomes, row omitted", row.label());
            continue;
        };
        info!(
            "{}: out {:.4} in {:.4} invalid {:.4} ({} queries, {} failed)",
            row.label(),
            proportions[0],
            proportions[1],
            proportions[2],
            counts.classified(),
            counts.failed
        );
        table.insert(ResultRow {
            row,
            counts,
            proportions,
        });
    }
    Ok(Evaluation { table, log })
}

/// Tuning results for every adaptive strategy the rows need.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tuning {
    pub proportions: Proportions,
    pub personalized: BTreeMap<Strategy, BTreeMap<UserId, TuneResult>>,
    pub global: BTreeMap<Strategy, TuneResult>,
}

/// Tunes the proportions the configured rows need. Users without training
/// PIEs keep the initial proportion.
pub fn tune_all(
    cfg: &ExperimentConfig,
    splits: &[ExperimentSplit],
    pkgs: &BTreeMap<UserId, Pkg>,
    harness: &Harness<'_>,
) -> Result<Tuning> {
    cfg.validate()?;
    let mut out = Tuning::default();
    for row in &cfg.rows {
        match row.mode {
            Mode::Baseline => {}
            Mode::Global => {
                if out.global.contains_key(&row.strategy) {
                    continue;
                }
                let result = tune_global(splits, pkgs, row.strategy, harness, &cfg.tune)?;
                info!(
                    "tuned global {} proportion: {:.4}",
                    row.strategy, result.proportion
                );
                out.proportions.entry(row.strategy).or_default().global = Some(result.proportion);
                out.global.insert(row.strategy, result);
            }
            Mode::Personalized => {
                if out.personalized.contains_key(&row.strategy) {
                    continue;
                }
                let mut results = BTreeMap::new();
                let entry = out.proportions.entry(row.strategy).or_default();
                for split in splits {
                    let pkg = pkgs.get(&split.user_id).ok_or_else(|| {
                        Error::NotFound(format!("PKG for user {}", split.user_id))
                    })?;
                    let p = if split.training_pies.is_empty() {
                        warn!(
                            "user {} has no training PIEs; using the initial proportion",
                            split.user_id
                        );
                        cfg.tune.init_proportion
                    } else {
                        let result =
                            tune_user(pkg, &split.training_pies, row.strategy, harness, &cfg.tune)?;
                        let p = result.proportion;
                        results.insert(split.user_id.clone(), result);
                        p
                    };
                    entry.per_user.insert(split.user_id.clone(), p);
                }
                out.personalized.insert(row.strategy, results);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRun {
    pub tuning: Tuning,
    pub evaluation: Evaluation,
}

/// Full protocol: tune on training PIEs, then evaluate on eval PIEs.
pub fn run_protocol(
    cfg: &ExperimentConfig,
    splits: &[ExperimentSplit],
    pkgs: &BTreeMap<UserId, Pkg>,
    harness: &Harness<'_>,
) -> Result<ProtocolRun> {
    let tuning = tune_all(cfg, splits, pkgs, harness)?;
    let evaluation = run_experiment(cfg, splits, pkgs, &tuning.proportions, harness)?;
    Ok(ProtocolRun { tuning, evaluation })
}

/// Tuning trace in outcome-log form with trailing `p_before  p_after` columns.
pub fn tuning_log(tuning: &Tuning) -> Vec<String> {
    let mut lines = Vec::new();
    let mut emit = |strategy: Strategy, mode: Mode, result: &TuneResult| {
        for step in &result.trace {
            let body = match &step.result {
                crate::tune::StepResult::Classified(o) => {
                    outcome_log_line(&step.user_id, strategy, step.proportion_before, o)
                }
                crate::tune::StepResult::Skipped(msg) => format!(
                    "{}\t{}\t{}\t{}\t{:.4}\tSkipped\t-\t{}",
                    step.user_id,
                    step.pie.f_given,
                    step.pie.f_bias,
                    strategy,
                    step.proportion_before,
                    crate::classify::escape_field(msg)
                ),
            };
            lines.push(format!(
                "{body}\t{}\t{:.4}",
                mode.as_str(),
                step.proportion_after
            ));
        }
    };
    for (strategy, users) in &tuning.personalized {
        for result in users.values() {
            emit(*strategy, Mode::Personalized, result);
        }
    }
    for (strategy, result) in &tuning.global {
        emit(*strategy, Mode::Global, result);
    }
    lines
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableFormat {
    #[default]
    Tsv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tsv" => Ok(TableFormat::Tsv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::Config(format!("unknown table format `{other}`"))),
        }
    }
}

const HEADER: [&str; 4] = ["Strategy", "Out-PIE", "In-PIE", "Invalid"];

fn render_rows(header: &[&str], rows: &[Vec<String>], format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Tsv => {
            out.push_str(&header.join("\t"));
            out.push('\n');
            for row in rows {
                out.push_str(&row.join("\t"));
                out.push('\n');
            }
        }
        TableFormat::Markdown => {
            out.push_str(&format!("| {} |\n", header.join(" | ")));
            let rule: Vec<&str> = (0..header.len())
                .map(|i| if i == 0 { "---" } else { "---:" })
                .collect();
            out.push_str(&format!("| {} |\n", rule.join(" | ")));
            for row in rows {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
        }
    }
    out
}

fn fixed4(v: f64) -> String {
    format!("{v:.4}")
}

/// Table rows in canonical order with 4-decimal proportions.
pub fn render_table(table: &ResultTable, format: TableFormat) -> String {
    let mut rows: Vec<&ResultRow> = table.rows.iter().collect();
    rows.sort_by_key(|r| r.row.rank());
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.row.label()];
            cells.extend(r.proportions.iter().map(|&v| fixed4(v)));
            cells
        })
        .collect();
    render_rows(&HEADER, &cells, format)
}

/// Reads a table in the tsv rendering (header line, then `label<TAB>out<TAB>in<TAB>invalid`).
/// Counts are not part of the format and come back as zero.
pub fn parse_table_tsv(text: &str) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if i == 0 || line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                "table",
                i + 1,
                "expected 4 tab-separated fields",
            ));
        }
        let row = RowSpec::from_label(fields[0])?;
        let mut proportions = [0.0; 3];
        for (slot, field) in proportions.iter_mut().zip(&fields[1..]) {
            *slot = field
                .trim()
                .parse()
                .map_err(|_| Error::parse("table", i + 1, format!("`{field}` is not a number")))?;
        }
        table.insert(ResultRow {
            row,
            counts: Counts::default(),
            proportions,
        });
    }
    Ok(table)
}

/// Side-by-side comparison of a run against reference values. Rows present in
/// either table appear in canonical order; missing values render as `-`.
pub fn render_comparison(
    run: &ResultTable,
    reference: &ResultTable,
    format: TableFormat,
) -> String {
    let header = [
        "Strategy",
        "Out-PIE",
        "In-PIE",
        "Invalid",
        "Ref Out-PIE",
        "Ref In-PIE",
        "Ref Invalid",
        "Δ Out-PIE",
        "Δ In-PIE",
        "Δ Invalid",
    ];
    let dash = || "-".to_string();
    let cells: Vec<Vec<String>> = RowSpec::TABLE_ORDER
        .iter()
        .filter_map(|&spec| {
            let ours = run.get(spec).map(|r| r.proportions);
            let theirs = reference.get(spec).map(|r| r.proportions);
            if ours.is_none() && theirs.is_none() {
                return None;
            }
            let mut cells = vec![spec.label()];
            for side in [ours, theirs] {
                cells.extend((0..3).map(|i| side.map_or_else(dash, |p| fixed4(p[i]))));
            }
            cells.extend((0..3).map(|i| match (ours, theirs) {
                (Some(a), Some(b)) => format!("{:+.4}", a[i] - b[i]),
                _ => dash(),
            }));
            Some(cells)
        })
        .collect();
    render_rows(&header, &cells, format)
}
