//! Trust-versus-noise slopes, configuration ranking and analysis-method
//! selection.
//!
//! Per-instance outcomes are first reduced to one [`FoldSummary`] per
//! (fold, level): the mean trust tuple over correctly predicted instances,
//! and the same mean restricted to instances that are correct at every
//! level of the fold. Everything downstream works on those summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::noise::{NoiseKind, NOISE_LEVELS};
use crate::oracle::{enumerate_configs, ToolConfig, TrustTuple};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeCalc {
    /// Trustworthy component.
    Trust,
    /// Untrustworthy component; a steeper increase is better.
    Untrust,
    /// trustworthy / (trustworthy + untrustworthy).
    Ratio,
}

impl SlopeCalc {
    pub const ALL: [SlopeCalc; 3] = [SlopeCalc::Trust, SlopeCalc::Untrust, SlopeCalc::Ratio];

    pub fn as_str(self) -> &'static str {
        match self {
            SlopeCalc::Trust => "trust",
            SlopeCalc::Untrust => "untrust",
            SlopeCalc::Ratio => "ratio",
        }
    }

    /// Scalar value of a tuple, `None` when a ratio is undefined.
    pub fn project(self, t: &TrustTuple) -> Option<f64> {
        match self {
            SlopeCalc::Trust => Some(t.trustworthy),
            SlopeCalc::Untrust => Some(t.untrustworthy),
            SlopeCalc::Ratio => {
                let d = t.trustworthy + t.untrustworthy;
                (d > 0.0).then(|| t.trustworthy / d)
            }
        }
    }

    /// Sort key where smaller is better.
    fn goodness_key(self, slope: f64) -> f64 {
        match self {
            SlopeCalc::Untrust => -slope,
            _ => slope,
        }
    }
}

impl fmt::Display for SlopeCalc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SlopeCalc {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trust" => Ok(SlopeCalc::Trust),
            "untrust" => Ok(SlopeCalc::Untrust),
            "ratio" => Ok(SlopeCalc::Ratio),
            other => Err(Error::invalid(format!("unknown slope calculation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AnalysisMethod {
    pub slope_calc: SlopeCalc,
    pub adjusted: bool,
    pub noise_subset: Vec<NoiseKind>,
}

impl AnalysisMethod {
    /// Adjusted slopes are meaningless under label noise (a correct
    /// prediction at high label noise is the exception), so that pairing
    /// is not analysed.
    pub fn is_excluded(&self) -> bool {
        self.adjusted && self.noise_subset.contains(&NoiseKind::Label)
    }

    pub fn group(&self) -> MethodGroup {
        MethodGroup {
            adjusted: self.adjusted,
            noise_subset: self.noise_subset.clone(),
        }
    }
}

/// Analysis methods that differ only in slope calculation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MethodGroup {
    pub adjusted: bool,
    pub noise_subset: Vec<NoiseKind>,
}

/// Every subset of `kinds` (including the empty one), in bitmask order.
pub fn noise_subsets(kinds: &[NoiseKind]) -> Vec<Vec<NoiseKind>> {
    (0u32..1 << kinds.len())
        .map(|mask| {
            kinds
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, k)| *k)
                .collect()
        })
        .collect()
}

/// All 3 × 2 × 2^k methods, exclusions included.
pub fn enumerate_methods(kinds: &[NoiseKind]) -> Vec<AnalysisMethod> {
    let mut out = Vec::new();
    for adjusted in [false, true] {
        for subset in noise_subsets(kinds) {
            for slope_calc in SlopeCalc::ALL {
                out.push(AnalysisMethod {
                    slope_calc,
                    adjusted,
                    noise_subset: subset.clone(),
                });
            }
        }
    }
    out
}

/// Outcome of one test instance under one model, with its trust tuple per
/// configuration when the prediction was correct.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceOutcome {
    pub fold: usize,
    pub level: u32,
    pub id: String,
    pub trust: Option<Vec<TrustTuple>>,
}

/// Mean trust of one (fold, level) cell under one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub tested: usize,
    pub correct: usize,
    pub trust: Option<TrustTuple>,
    /// Instances correct at every level of the fold.
    pub adjusted_count: usize,
    pub adjusted_trust: Option<TrustTuple>,
}

/// One line of the results JSONL: a model set under one configuration at
/// one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model_set: String,
    pub noise_kind: NoiseKind,
    pub config: usize,
    pub level: u32,
    pub tested: usize,
    pub correct: usize,
    /// Mean over all correct instances of all folds.
    pub trust: Option<TrustTuple>,
    pub folds: Vec<FoldSummary>,
}

/// Reduces outcomes to result rows for `n_configs` configurations, sorted
/// by (config, level).
pub fn summarize_outcomes(
    model_set: &str,
    noise_kind: NoiseKind,
    outcomes: &[InstanceOutcome],
    n_configs: usize,
) -> Result<Vec<ResultRow>> {
    for o in outcomes {
        if let Some(t) = &o.trust {
            if t.len() != n_configs {
                return Err(Error::data(format!(
                    "instance {} carries {} trust tuples, expected {n_configs}",
                    o.id,
                    t.len()
                )));
            }
        }
    }
    let mut cells: BTreeMap<(u32, usize), Vec<&InstanceOutcome>> = BTreeMap::new();
    let mut correct_levels: BTreeMap<(usize, &str), BTreeSet<u32>> = BTreeMap::new();
    let mut levels_in_fold: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
    for o in outcomes {
        cells.entry((o.level, o.fold)).or_default().push(o);
        levels_in_fold.entry(o.fold).or_default().insert(o.level);
        if o.trust.is_some() {
            correct_levels.entry((o.fold, o.id.as_str())).or_default().insert(o.level);
        }
    }
    let always_correct = |o: &InstanceOutcome| correct_levels.get(&(o.fold, o.id.as_str())) == levels_in_fold.get(&o.fold);

    let rows = (0..n_configs)
        .into_par_iter()
        .flat_map_iter(|config| {
            let mut by_level: BTreeMap<u32, Vec<FoldSummary>> = BTreeMap::new();
            for (&(level, fold), members) in &cells {
                let correct: Vec<&TrustTuple> =
                    members.iter().filter_map(|o| o.trust.as_ref().map(|t| &t[config])).collect();
                let adjusted: Vec<&TrustTuple> = members
                    .iter()
                    .filter(|o| always_correct(o))
                    .filter_map(|o| o.trust.as_ref().map(|t| &t[config]))
                    .collect();
                by_level.entry(level).or_default().push(FoldSummary {
                    fold,
                    tested: members.len(),
                    correct: correct.len(),
                    trust: TrustTuple::mean(correct.iter().copied()),
                    adjusted_count: adjusted.len(),
                    adjusted_trust: TrustTuple::mean(adjusted.iter().copied()),
                });
            }
            by_level
                .into_iter()
                .map(|(level, folds)| {
                    let pooled: Vec<&TrustTuple> = outcomes
                        .iter()
                        .filter(|o| o.level == level)
                        .filter_map(|o| o.trust.as_ref().map(|t| &t[config]))
                        .collect();
                    ResultRow {
                        model_set: model_set.to_string(),
                        noise_kind,
                        config,
                        level,
                        tested: folds.iter().map(|f| f.tested).sum(),
                        correct: folds.iter().map(|f| f.correct).sum(),
                        trust: TrustTuple::mean(pooled.iter().copied()),
                        folds,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(rows)
}

/// (level in [0, 1], value) points of one model set under one configuration.
/// Each fold's mean tuple is projected to a scalar and the fold scalars at a
/// level are averaged; levels with no defined fold value are dropped.
pub fn series_for(rows: &[&ResultRow], calc: SlopeCalc, adjusted: bool) -> Result<Vec<(f64, f64)>> {
    let mut points = Vec::new();
    for row in rows {
        let values: Vec<f64> = row
            .folds
            .iter()
            .filter_map(|f| if adjusted { f.adjusted_trust.as_ref() } else { f.trust.as_ref() })
            .filter_map(|t| calc.project(t))
            .collect();
        if !values.is_empty() {
            points.push((row.level as f64 / 100.0, values.iter().sum::<f64>() / values.len() as f64));
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    if points.len() < 2 {
        return Err(Error::data(format!("insufficient points ({}) to fit a slope", points.len())));
    }
    Ok(points)
}

/// Ordinary least-squares slope.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::data("insufficient points to fit a slope"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::data("all noise levels are equal; slope undefined"));
    }
    Ok(sxy / sxx)
}

/// Slope of every configuration of one model set, or the reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSetSlopes {
    pub model_set: String,
    pub noise_kind: NoiseKind,
    pub slope_calc: SlopeCalc,
    pub adjusted: bool,
    pub slopes: Vec<std::result::Result<f64, String>>,
}

pub fn model_set_slopes(
    rows: &[ResultRow],
    model_set: &str,
    n_configs: usize,
    calc: SlopeCalc,
    adjusted: bool,
) -> Result<ModelSetSlopes> {
    let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.model_set == model_set).collect();
    let noise_kind = mine
        .first()
        .map(|r| r.noise_kind)
        .ok_or_else(|| Error::data(format!("no results for model set {model_set}")))?;
    let mut per_config: Vec<Vec<&ResultRow>> = vec![Vec::new(); n_configs];
    for r in mine {
        if r.config >= n_configs {
            return Err(Error::data(format!("result row names config {} of {n_configs}", r.config)));
        }
        per_config[r.config].push(r);
    }
    let slopes = per_config
        .par_iter()
        .map(|rs| {
            series_for(rs, calc, adjusted)
                .and_then(|p| fit_slope(&p))
                .map_err(|e| e.to_string())
        })
        .collect();
    Ok(ModelSetSlopes {
        model_set: model_set.to_string(),
        noise_kind,
        slope_calc: calc,
        adjusted,
        slopes,
    })
}

/// Ranks of `slopes` (1 = best), ties and failures receiving average ranks;
/// failures take the worst positions.
pub fn rank_one(slopes: &[Option<f64>], calc: SlopeCalc) -> Vec<f64> {
    let mut order: Vec<usize> = (0..slopes.len()).collect();
    let key = |i: usize| slopes[i].map(|s| calc.goodness_key(s));
    order.sort_by(|&a, &b| match (key(a), key(b)) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let mut ranks = vec![0.0; slopes.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && key(order[end]) == key(order[start]) {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Rank totals per configuration summed across model sets; lower is better.
pub fn rank_configs(per_model_set: &[Vec<Option<f64>>], calc: SlopeCalc) -> Result<Vec<f64>> {
    let Some(first) = per_model_set.first() else {
        return Err(Error::data("no data: the method covers no model set"));
    };
    let mut totals = vec![0.0; first.len()];
    for slopes in per_model_set {
        if slopes.len() != totals.len() {
            return Err(Error::data("model sets disagree on the number of configurations"));
        }
        for (t, r) in totals.iter_mut().zip(rank_one(slopes, calc)) {
            *t += r;
        }
    }
    Ok(totals)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    #[serde(flatten)]
    pub method: AnalysisMethod,
    /// "ok", "excluded" or "no data".
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_totals: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    #[serde(flatten)]
    pub group: MethodGroup,
    /// Mean over configurations of the range of rank totals across the three
    /// slope calculations.
    pub rank_variation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSlope {
    pub model_set: String,
    pub noise_kind: NoiseKind,
    pub slope_calc: SlopeCalc,
    pub adjusted: bool,
    pub slope: Option<f64>,
    pub points: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: MethodGroup,
    pub config_index: usize,
    pub config: ToolConfig,
    pub config_label: String,
    /// Rank total of the configuration summed over the three slope
    /// calculations.
    pub rank_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub model_sets: Vec<(String, NoiseKind)>,
    pub methods: Vec<MethodReport>,
    pub groups: Vec<GroupReport>,
    pub selected: Selection,
    /// Slopes of every model set under the selected configuration.
    pub selected_slopes: Vec<SelectedSlope>,
}

/// Picks the method group with the least rank variation across slope
/// calculations, then its best configuration. `methods` maps each method
/// to its rank totals (`None` when it has no data).
pub fn select_method_and_config(
    methods: &[(AnalysisMethod, Option<Vec<f64>>)],
) -> Result<(MethodGroup, usize, f64, Vec<GroupReport>)> {
    let mut groups: BTreeMap<MethodGroup, BTreeMap<SlopeCalc, &Vec<f64>>> = BTreeMap::new();
    let mut group_order: Vec<MethodGroup> = Vec::new();
    for (m, totals) in methods {
        if m.is_excluded() {
            continue;
        }
        if let Some(t) = totals {
            let g = m.group();
            if !group_order.contains(&g) {
                group_order.push(g.clone());
            }
            groups.entry(g).or_default().insert(m.slope_calc, t);
        }
    }
    let mut reports = Vec::new();
    let mut best: Option<(f64, MethodGroup)> = None;
    for g in group_order {
        let by_calc = &groups[&g];
        if by_calc.len() != SlopeCalc::ALL.len() {
            continue;
        }
        let tables: Vec<&Vec<f64>> = by_calc.values().copied().collect();
        let n = tables[0].len();
        if n == 0 {
            continue;
        }
        let variation = (0..n)
            .map(|c| {
                let vals = tables.iter().map(|t| t[c]);
                let hi = vals.clone().fold(f64::NEG_INFINITY, f64::max);
                let lo = vals.fold(f64::INFINITY, f64::min);
                hi - lo
            })
            .sum::<f64>()
            / n as f64;
        reports.push(GroupReport {
            group: g.clone(),
            rank_variation: variation,
        });
        if best.as_ref().is_none_or(|(v, _)| variation < *v) {
            best = Some((variation, g));
        }
    }
    let (_, group) = best.ok_or_else(|| Error::data("no admissible analysis method has data"))?;
    let tables: Vec<&Vec<f64>> = groups[&group].values().copied().collect();
    let (config, total) = (0..tables[0].len())
        .map(|c| (c, tables.iter().map(|t| t[c]).sum::<f64>()))
        .fold(None, |acc: Option<(usize, f64)>, (c, s)| match acc {
            Some((_, bs)) if bs <= s => acc,
            _ => Some((c, s)),
        })
        .expect("non-empty rank table");
    Ok((group, config, total, reports))
}

/// Full analysis over the result rows of an experiment.
pub fn analyze(rows: &[ResultRow]) -> Result<AnalysisReport> {
    let configs = enumerate_configs();
    let n_configs = configs.len();
    let mut model_sets: Vec<(String, NoiseKind)> = rows
        .iter()
        .map(|r| (r.model_set.clone(), r.noise_kind))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    model_sets.sort();
    if model_sets.is_empty() {
        return Err(Error::data("no result rows to analyse"));
    }
    let kinds: Vec<NoiseKind> = NoiseKind::ALL
        .into_iter()
        .filter(|k| model_sets.iter().any(|(_, mk)| mk == k))
        .collect();

    let mut slope_tables: BTreeMap<(SlopeCalc, bool), Vec<ModelSetSlopes>> = BTreeMap::new();
    for calc in SlopeCalc::ALL {
        for adjusted in [false, true] {
            let tables = model_sets
                .iter()
                .map(|(ms, _)| model_set_slopes(rows, ms, n_configs, calc, adjusted))
                .collect::<Result<Vec<_>>>()?;
            slope_tables.insert((calc, adjusted), tables);
        }
    }

    let mut method_reports = Vec::new();
    let mut ranked = Vec::new();
    for method in enumerate_methods(&kinds) {
        let (status, totals) = if method.is_excluded() {
            ("excluded".to_string(), None)
        } else {
            let per_set: Vec<Vec<Option<f64>>> = slope_tables[&(method.slope_calc, method.adjusted)]
                .iter()
                .filter(|t| method.noise_subset.contains(&t.noise_kind))
                .map(|t| t.slopes.iter().map(|s| s.as_ref().ok().copied()).collect())
                .collect();
            match rank_configs(&per_set, method.slope_calc) {
                Ok(t) => ("ok".to_string(), Some(t)),
                Err(_) => ("no data".to_string(), None),
            }
        };
        ranked.push((method.clone(), totals.clone()));
        method_reports.push(MethodReport {
            method,
            status,
            rank_totals: totals,
        });
    }

    let (group, config_index, rank_total, groups) = select_method_and_config(&ranked)?;
    let mut selected_slopes = Vec::new();
    for (ms, kind) in &model_sets {
        for calc in SlopeCalc::ALL {
            let mine: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| &r.model_set == ms && r.config == config_index)
                .collect();
            let (slope, points, error) = match series_for(&mine, calc, group.adjusted).and_then(|p| {
                let s = fit_slope(&p)?;
                Ok((s, p))
            }) {
                Ok((s, p)) => (Some(s), p, None),
                Err(e) => (None, Vec::new(), Some(e.to_string())),
            };
            selected_slopes.push(SelectedSlope {
                model_set: ms.clone(),
                noise_kind: *kind,
                slope_calc: calc,
                adjusted: group.adjusted,
                slope,
                points,
                error,
            });
        }
    }
    let config = configs[config_index];
    Ok(AnalysisReport {
        model_sets,
        methods: method_reports,
        groups,
        selected: Selection {
            method: group,
            config_index,
            config_label: config.to_string(),
            config,
            rank_total,
        },
        selected_slopes,
    })
}

/// Levels as fractions, in order.
pub fn level_axis() -> Vec<f64> {
    NOISE_LEVELS.iter().map(|l| *l as f64 / 100.0).collect()
}
