use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{rmse, Dataset};
use super::lut::{build_lut, ErrorLUT};
use super::select::BudgetPlan;
use super::stagewise::{train_stagewise, StagewiseRegressor};
use crate::features::{FeatureGroup, FeatureLayout};
use crate::{Error, Result};

pub const MODEL_VERSION: u32 = 1;

/// A regressor for one feature layout with its correction table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub layout: FeatureLayout,
    pub regressor: StagewiseRegressor,
    pub lut: ErrorLUT,
    pub holdout_rmse: f64,
}

impl ModelVariant {
    pub fn cost(&self) -> f64 {
        self.layout.total_cost()
    }
}

/// Trained depth predictor: one variant per affordable feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthModel {
    pub version: u32,
    pub patch_size: usize,
    pub plan: Option<BudgetPlan>,
    /// Ordered by increasing cost.
    pub variants: Vec<ModelVariant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub n_stages: usize,
    pub lambda: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            n_stages: 3,
            lambda: 1.0,
        }
    }
}

/// Fit one variant on `groups` and build its table on the holdout rows.
pub fn train_variant(train: &Dataset, holdout: &Dataset, groups: &[FeatureGroup], opts: &TrainOptions) -> Result<ModelVariant> {
    let layout = FeatureLayout::new(groups, &costs_of(&train.layout));
    if layout.slots.is_empty() {
        return Err(Error::InvalidArgument("a model variant needs at least one group".into()));
    }
    let tr = train.restrict(&layout)?;
    let ho = holdout.restrict(&layout)?;
    let regressor = train_stagewise(&tr.x, &tr.y, opts.n_stages, opts.lambda)?;
    let pred = regressor.predict(&ho.x);
    Ok(ModelVariant {
        holdout_rmse: rmse(&pred, ho.y.as_slice()),
        lut: build_lut(&pred, ho.y.as_slice()),
        layout,
        regressor,
    })
}

fn costs_of(layout: &FeatureLayout) -> crate::features::GroupCosts {
    let mut c = crate::features::GroupCosts::nominal();
    for s in &layout.slots {
        c.0[s.group.index()] = s.cost_ms;
    }
    c
}

/// Train a variant for every non-empty prefix of `plan`, or a single variant
/// on all groups of the data when no plan is given.
pub fn train_depth_model(
    train: &Dataset,
    holdout: &Dataset,
    patch_size: usize,
    plan: Option<&BudgetPlan>,
    opts: &TrainOptions,
) -> Result<DepthModel> {
    let prefixes: Vec<Vec<FeatureGroup>> = match plan {
        Some(p) if !p.steps.is_empty() => (1..=p.steps.len()).map(|k| p.groups()[..k].to_vec()).collect(),
        Some(_) => return Err(Error::InvalidArgument("budget plan selects no groups".into())),
        None => vec![train.layout.groups()],
    };
    let mut variants = Vec::with_capacity(prefixes.len());
    for groups in &prefixes {
        let v = train_variant(train, holdout, groups, opts)?;
        log::info!(
            "variant [{}]: holdout RMSE {:.3} m",
            groups.iter().map(|g| g.name()).collect::<Vec<_>>().join(","),
            v.holdout_rmse
        );
        variants.push(v);
    }
    variants.sort_by(|a, b| a.cost().total_cmp(&b.cost()));
    Ok(DepthModel {
        version: MODEL_VERSION,
        patch_size,
        plan: plan.cloned(),
        variants,
    })
}

impl DepthModel {
    /// Most expensive variant within `budget_ms`; the cheapest one if none
    /// fits.
    pub fn variant_for_budget(&self, budget_ms: f64) -> &ModelVariant {
        self.variants
            .iter()
            .rev()
            .find(|v| v.cost() <= budget_ms)
            .unwrap_or(&self.variants[0])
    }

    pub fn full(&self) -> &ModelVariant {
        self.variants.last().expect("model has variants")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: DepthModel = serde_json::from_str(text)?;
        if m.version != MODEL_VERSION {
            return Err(Error::Version {
                found: m.version,
                expected: MODEL_VERSION,
            });
        }
        if m.variants.is_empty() {
            return Err(Error::parse("model", "no variants"));
        }
        for v in &m.variants {
            if v.regressor.dim() != v.layout.dim() {
                return Err(Error::LayoutMismatch(format!(
                    "regressor expects {} features, layout has {}",
                    v.regressor.dim(),
                    v.layout.dim()
                )));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::features::GroupCosts;

    fn toy() -> (Dataset, Dataset) {
        let layout = FeatureLayout::new(&[FeatureGroup::FlowStats, FeatureGroup::StructureTensor], &GroupCosts::nominal());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400;
        let x: DMatrix<f64> = DMatrix::from_fn(n, layout.dim(), |_, _| rng.gen_range(0.0..1.0));
        let y = DVector::from_iterator(n, (0..n).map(|i| 2.0 + 10.0 * x[(i, 0)] + 3.0 * x[(i, 10)].powi(2)));
        Dataset::new(layout, x, y).unwrap().split_every(10)
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let (tr, ho) = toy();
        let m = train_depth_model(&tr, &ho, 16, None, &TrainOptions::default()).unwrap();
        let back = DepthModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let row: Vec<f64> = ho.x.row(3).iter().copied().collect();
        assert_eq!(
            back.full().regressor.predict_row(&row).to_bits(),
            m.full().regressor.predict_row(&row).to_bits()
        );
    }

    #[test]
    fn wrong_version_is_rejected() {
        let (tr, ho) = toy();
        let mut m = train_depth_model(&tr, &ho, 16, None, &TrainOptions::default()).unwrap();
        m.version = 99;
        let text = serde_json::to_string(&m).unwrap();
        assert!(matches!(DepthModel::from_json(&text), Err(Error::Version { found: 99, .. })));
    }

    #[test]
    fn budget_picks_affordable_variant() {
        let (tr, ho) = toy();
        let plan = crate::learn::select_budgeted_groups(&tr, &GroupCosts::nominal(), 100.0, 1e-6).unwrap();
        let m = train_depth_model(&tr, &ho, 16, Some(&plan), &TrainOptions::default()).unwrap();
        assert_eq!(m.variants.len(), 2);
        assert_eq!(m.variant_for_budget(1.6).layout.groups(), vec![FeatureGroup::FlowStats]);
        assert_eq!(m.variant_for_budget(100.0).layout.dim(), tr.layout.dim());
        assert_eq!(m.variant_for_budget(0.0).layout.groups(), vec![FeatureGroup::FlowStats]);
    }
}
