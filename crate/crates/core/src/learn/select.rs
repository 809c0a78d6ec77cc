//! Cost-sensitive greedy selection of feature groups.
//!
//! Each step orthonormalises every candidate group against the span of the
//! groups already chosen (plus the intercept) and scores it by the increase
//! in explained variance of the target per millisecond of extraction cost.
//! The full greedy order does not depend on the budget, so the plan for any
//! budget is the longest affordable prefix and plans are nested.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::{rmse, Dataset};
use super::ridge::{fit_ridge, Standardizer};
use crate::features::{FeatureGroup, FeatureLayout, GroupCosts};
use crate::{Error, Result};

/// A column is dropped as dependent when orthogonalisation leaves less than
/// this fraction of its norm.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub group: FeatureGroup,
    pub cumulative_cost: f64,
    /// Validation RMSE of a ridge model on this prefix (m).
    pub validation_error: f64,
    /// Fraction of target variance newly explained by this group.
    pub explained_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub budget_ms: f64,
    pub steps: Vec<PlanStep>,
    /// Validation RMSE of the constant predictor.
    pub baseline_error: f64,
    /// Set when nothing fits in the budget.
    pub warning: Option<String>,
}

impl BudgetPlan {
    pub fn groups(&self) -> Vec<FeatureGroup> {
        self.steps.iter().map(|s| s.group).collect()
    }

    pub fn total_cost(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cumulative_cost)
    }

    /// Error of the plan's final prefix.
    pub fn validation_error(&self) -> f64 {
        self.steps.last().map_or(self.baseline_error, |s| s.validation_error)
    }

    /// The longest prefix whose cumulative cost fits `budget_ms`.
    pub fn truncate(&self, budget_ms: f64) -> BudgetPlan {
        let steps: Vec<PlanStep> = self
            .steps
            .iter()
            .take_while(|s| s.cumulative_cost <= budget_ms)
            .cloned()
            .collect();
        BudgetPlan {
            budget_ms,
            warning: steps.is_empty().then(|| empty_warning(budget_ms)),
            steps,
            baseline_error: self.baseline_error,
        }
    }
}

fn empty_warning(budget_ms: f64) -> String {
    format!("no feature group fits a budget of {budget_ms} ms")
}

/// Gram–Schmidt (applied twice) of `cols` against `basis` and each other.
fn orthonormalize(basis: &[DVector<f64>], cols: impl IntoIterator<Item = DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for mut v in cols {
        let norm0 = v.norm();
        if norm0 == 0.0 || !norm0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for q in basis.iter().chain(out.iter()) {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > RANK_TOL * norm0 {
            out.push(v / norm);
        }
    }
    out
}

fn group_columns(x: &DMatrix<f64>, layout: &FeatureLayout, g: FeatureGroup) -> Vec<DVector<f64>> {
    let slot = layout.slot(g).expect("group in layout");
    (slot.offset..slot.offset + slot.len)
        .map(|j| x.column(j).into_owned())
        .collect()
}

/// Greedy order over every group in the data's layout with the explained
/// variance gain of each pick. Ties go to the lower group index.
pub fn greedy_order(train: &Dataset, costs: &GroupCosts) -> Result<Vec<(FeatureGroup, f64)>> {
    let groups = train.layout.groups();
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("selection needs at least two feature groups".into()));
    }
    if let Some(g) = groups.iter().find(|g| !(costs.get(**g) > 0.0)) {
        return Err(Error::InvalidArgument(format!("cost of {g} must be positive")));
    }
    if train.is_empty() {
        return Err(Error::EmptyData("selection data"));
    }
    let n = train.len();
    let mut basis = vec![DVector::from_element(n, 1.0 / (n as f64).sqrt())];
    let mut resid = train.y.add_scalar(-train.y.mean());
    let total = resid.norm_squared().max(f64::MIN_POSITIVE);

    let mut remaining = groups;
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let mut best: Option<(usize, f64, f64, Vec<DVector<f64>>)> = None;
        for (i, &g) in remaining.iter().enumerate() {
            let q = orthonormalize(&basis, group_columns(&train.x, &train.layout, g));
            let gain: f64 = q.iter().map(|v| v.dot(&resid).powi(2)).sum::<f64>() / total;
            let score = gain / costs.get(g);
            if best.as_ref().map_or(true, |b| score > b.1) {
                best = Some((i, score, gain, q));
            }
        }
        let (i, _, gain, q) = best.expect("non-empty candidates");
        for v in &q {
            let c = v.dot(&resid);
            resid.axpy(-c, v, 1.0);
        }
        basis.extend(q);
        order.push((remaining.remove(i), gain));
    }
    Ok(order)
}

/// Validation RMSE of a ridge fit restricted to `groups`; the constant
/// predictor when `groups` is empty.
pub fn subset_error(train: &Dataset, valid: &Dataset, groups: &[FeatureGroup], lambda: f64) -> Result<f64> {
    if groups.is_empty() {
        let m = train.y.mean();
        let pred = vec![m; valid.len()];
        return Ok(rmse(&pred, valid.y.as_slice()));
    }
    let layout = FeatureLayout::new(groups, &GroupCosts::nominal());
    let tr = train.restrict(&layout)?;
    let va = valid.restrict(&layout)?;
    let norm = Standardizer::fit(&tr.x);
    let fit = fit_ridge(&norm.apply(&tr.x), &tr.y, lambda)?;
    let pred = (norm.apply(&va.x) * &fit.weights).add_scalar(fit.bias);
    Ok(rmse(pred.as_slice(), va.y.as_slice()))
}

/// Greedy plan truncated at `budget_ms`. Every tenth sample is held out to
/// report the validation error of each prefix.
pub fn select_budgeted_groups(data: &Dataset, costs: &GroupCosts, budget_ms: f64, lambda: f64) -> Result<BudgetPlan> {
    let (train, valid) = data.split_every(10);
    if valid.is_empty() {
        return Err(Error::EmptyData("validation split"));
    }
    let order = greedy_order(&train, costs)?;
    let baseline_error = subset_error(&train, &valid, &[], lambda)?;
    let mut steps = Vec::new();
    let mut chosen = Vec::new();
    let mut cost = 0.0;
    for (g, gain) in order {
        cost += costs.get(g);
        if cost > budget_ms {
            break;
        }
        chosen.push(g);
        steps.push(PlanStep {
            group: g,
            cumulative_cost: cost,
            validation_error: subset_error(&train, &valid, &chosen, lambda)?,
            explained_gain: gain,
        });
    }
    let warning = steps.is_empty().then(|| empty_warning(budget_ms));
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(BudgetPlan {
        budget_ms,
        steps,
        baseline_error,
        warning,
    })
}
