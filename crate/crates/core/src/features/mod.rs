//! Patch-grid feature extraction.
//!
//! Every patch is described by three regions: the patch itself, the
//! full-height column of the same width, and the full-height column three
//! patches wide centred on it (clipped at the image border). Each enabled
//! feature group is evaluated on all three regions and the results are
//! concatenated group by group:
//!
//! ```text
//! [ group₀(patch) group₀(column) group₀(wide) | group₁(patch) … ]
//! ```

mod flow;
mod hog;
mod image;
mod laws;
mod radon;
mod structure;

use std::fmt;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use flow::{flow_stats, front_flow_field, FlowField, FLOW_DIMS, FLOW_NOISE_PX};
pub use hog::{hog, HOG_BINS, HOG_DIMS};
pub use image::{GrayImage, Integral, Rect};
pub use laws::{laws_masks, LAWS_DIMS};
pub use radon::{radon, RADON_ANGLES, RADON_DIMS};
pub use structure::{structure_tensor, STRUCTURE_DIMS};

use crate::sim_world::Frame;
use crate::{Error, Result};

/// Guard used by every ratio normalisation.
pub const EPS: f64 = 1e-8;

/// Regions described per patch.
pub const REGIONS: [&str; 3] = ["patch", "column", "wide"];

pub const DEFAULT_PATCH_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    FlowStats,
    Radon,
    StructureTensor,
    Laws,
    Hog,
}

impl FeatureGroup {
    /// Canonical order; layouts always list groups in this order.
    pub const ALL: [FeatureGroup; 5] = [
        FeatureGroup::FlowStats,
        FeatureGroup::Radon,
        FeatureGroup::StructureTensor,
        FeatureGroup::Laws,
        FeatureGroup::Hog,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::FlowStats => "flow_stats",
            FeatureGroup::Radon => "radon",
            FeatureGroup::StructureTensor => "structure_tensor",
            FeatureGroup::Laws => "laws",
            FeatureGroup::Hog => "hog",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == name)
    }

    /// Dimensions contributed per region.
    pub fn region_dims(self) -> usize {
        match self {
            FeatureGroup::FlowStats => FLOW_DIMS,
            FeatureGroup::Radon => RADON_DIMS,
            FeatureGroup::StructureTensor => STRUCTURE_DIMS,
            FeatureGroup::Laws => LAWS_DIMS,
            FeatureGroup::Hog => HOG_DIMS,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-frame extraction cost of each group in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupCosts(pub [f64; 5]);

impl GroupCosts {
    /// Nominal costs for reproducible runs (roughly what a 320×240 frame
    /// costs on a desktop core).
    pub fn nominal() -> Self {
        Self([1.5, 3.0, 4.0, 5.0, 2.5])
    }

    pub fn get(&self, g: FeatureGroup) -> f64 {
        self.0[g.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSlot {
    pub group: FeatureGroup,
    pub offset: usize,
    pub len: usize,
    pub cost_ms: f64,
}

/// Column layout of a feature vector; fixed for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub slots: Vec<GroupSlot>,
}

impl FeatureLayout {
    /// Layout for `groups` (deduplicated, canonical order).
    pub fn new(groups: &[FeatureGroup], costs: &GroupCosts) -> Self {
        let mut offset = 0;
        let slots = FeatureGroup::ALL
            .into_iter()
            .filter(|g| groups.contains(g))
            .map(|group| {
                let len = REGIONS.len() * group.region_dims();
                let slot = GroupSlot {
                    group,
                    offset,
                    len,
                    cost_ms: costs.get(group),
                };
                offset += len;
                slot
            })
            .collect();
        Self { slots }
    }

    pub fn all(costs: &GroupCosts) -> Self {
        Self::new(&FeatureGroup::ALL, costs)
    }

    pub fn dim(&self) -> usize {
        self.slots.iter().map(|s| s.len).sum()
    }

    pub fn groups(&self) -> Vec<FeatureGroup> {
        self.slots.iter().map(|s| s.group).collect()
    }

    pub fn contains(&self, g: FeatureGroup) -> bool {
        self.slots.iter().any(|s| s.group == g)
    }

    pub fn slot(&self, g: FeatureGroup) -> Option<&GroupSlot> {
        self.slots.iter().find(|s| s.group == g)
    }

    pub fn total_cost(&self) -> f64 {
        self.slots.iter().map(|s| s.cost_ms).sum()
    }

    /// Column names `group.region.k`.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for s in &self.slots {
            for region in REGIONS {
                for k in 0..s.group.region_dims() {
                    names.push(format!("{}.{}.{}", s.group, region, k));
                }
            }
        }
        names
    }

    /// Column indices of `self` inside `wider`, which must contain every group.
    pub fn columns_within(&self, wider: &FeatureLayout) -> Result<Vec<usize>> {
        let mut idx = Vec::with_capacity(self.dim());
        for s in &self.slots {
            let w = wider.slot(s.group).ok_or_else(|| {
                Error::LayoutMismatch(format!("group {} missing from source layout", s.group))
            })?;
            idx.extend(w.offset..w.offset + w.len);
        }
        Ok(idx)
    }
}

/// Non-overlapping tiling of a frame; pixels beyond the last full patch are
/// cropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchGrid {
    pub fn for_frame(width: usize, height: usize, patch_size: usize) -> Result<Self> {
        if patch_size == 0 || patch_size > width || patch_size > height {
            return Err(Error::GridMismatch {
                patch_size,
                width,
                height,
            });
        }
        Ok(Self {
            patch_size,
            rows: height / patch_size,
            cols: width / patch_size,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, frame: &Frame) -> Result<()> {
        if self.patch_size == 0
            || self.rows == 0
            || self.cols == 0
            || self.rows * self.patch_size > frame.height
            || self.cols * self.patch_size > frame.width
        {
            return Err(Error::GridMismatch {
                patch_size: self.patch_size,
                width: frame.width,
                height: frame.height,
            });
        }
        Ok(())
    }

    pub fn patch_rect(&self, row: usize, col: usize) -> Rect {
        let p = self.patch_size;
        Rect::new(col * p, row * p, p, p)
    }

    pub fn column_rect(&self, col: usize) -> Rect {
        let p = self.patch_size;
        Rect::new(col * p, 0, p, self.rows * p)
    }

    /// Three patches wide, centred on `col`, clipped to the cropped image.
    pub fn wide_rect(&self, col: usize) -> Rect {
        let p = self.patch_size;
        let c0 = col.saturating_sub(1);
        let c1 = (col + 2).min(self.cols);
        Rect::new(c0 * p, 0, (c1 - c0) * p, self.rows * p)
    }

    /// Pixel centre of a patch.
    pub fn patch_center(&self, row: usize, col: usize) -> (f64, f64) {
        let p = self.patch_size as f64;
        ((col as f64 + 0.5) * p, (row as f64 + 0.5) * p)
    }
}

/// Per-patch feature vectors, row-major (`patch = row · cols + col`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub layout: FeatureLayout,
    pub grid: PatchGrid,
    pub data: Vec<f64>,
    /// True when the flow group was requested but no previous frame existed;
    /// its columns are zero.
    pub flow_missing: bool,
}

impl FeatureMatrix {
    pub fn n_patches(&self) -> usize {
        self.grid.len()
    }

    pub fn row(&self, patch: usize) -> &[f64] {
        let d = self.layout.dim();
        &self.data[patch * d..(patch + 1) * d]
    }

    /// CSV with a header of layout column names, one row per patch.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["row".to_string(), "col".to_string()];
        header.extend(self.layout.column_names());
        w.write_record(&header)?;
        for p in 0..self.n_patches() {
            let mut rec = vec![(p / self.grid.cols).to_string(), (p % self.grid.cols).to_string()];
            rec.extend(self.row(p).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Frame-wide intermediate maps for the enabled groups.
struct FrameMaps {
    gray: GrayImage,
    integral: Integral,
    flow: Option<flow::FlowMaps>,
    orient: Option<hog::OrientationMap>,
    structure: Option<structure::StructureMaps>,
    laws: Option<laws::LawsMaps>,
    radon: Option<radon::RadonTables>,
}

impl FrameMaps {
    fn build(frame: &Frame, prev: Option<&Frame>, layout: &FeatureLayout) -> Self {
        let gray = GrayImage::from_frame(frame);
        let integral = Integral::new(gray.width, gray.height, &gray.data);
        let need_grad = layout.contains(FeatureGroup::Hog) || layout.contains(FeatureGroup::StructureTensor);
        let (gx, gy) = if need_grad {
            gray.gradients()
        } else {
            (Vec::new(), Vec::new())
        };
        let flow = match prev {
            Some(p) if layout.contains(FeatureGroup::FlowStats) => {
                Some(flow::FlowMaps::new(&front_flow_field(frame, p, FLOW_NOISE_PX)))
            }
            _ => None,
        };
        Self {
            orient: layout
                .contains(FeatureGroup::Hog)
                .then(|| hog::OrientationMap::new(gray.width, &gx, &gy)),
            structure: layout
                .contains(FeatureGroup::StructureTensor)
                .then(|| structure::StructureMaps::new(gray.width, gray.height, &gx, &gy)),
            laws: layout
                .contains(FeatureGroup::Laws)
                .then(|| laws::LawsMaps::new(&gray)),
            radon: layout
                .contains(FeatureGroup::Radon)
                .then(radon::RadonTables::new),
            flow,
            integral,
            gray,
        }
    }

    fn describe(&self, group: FeatureGroup, r: Rect, radon: Option<&radon::Profiles>, out: &mut [f64]) {
        match group {
            FeatureGroup::FlowStats => match &self.flow {
                Some(f) => f.region(r, out),
                None => out.iter_mut().for_each(|v| *v = 0.0),
            },
            FeatureGroup::Radon => {
                let profiles = radon.expect("radon profiles");
                radon::describe(profiles, self.integral.mean(r), out)
            }
            FeatureGroup::StructureTensor => self.structure.as_ref().unwrap().region(r, out),
            FeatureGroup::Laws => self.laws.as_ref().unwrap().region(r, out),
            FeatureGroup::Hog => self.orient.as_ref().unwrap().region(r, out),
        }
    }
}

/// Extract features for every patch of `grid`.
///
/// `prev` supplies the motion for the flow group; without it the flow
/// columns are zero and [`FeatureMatrix::flow_missing`] is set.
pub fn extract_patch_features(
    frame: &Frame,
    prev: Option<&Frame>,
    grid: &PatchGrid,
    layout: &FeatureLayout,
) -> Result<FeatureMatrix> {
    grid.check(frame)?;
    if let Some(p) = prev {
        if p.width != frame.width || p.height != frame.height {
            return Err(Error::InvalidArgument(format!(
                "previous frame is {}x{}, current is {}x{}",
                p.width, p.height, frame.width, frame.height
            )));
        }
    }
    let maps = FrameMaps::build(frame, prev, layout);
    let dim = layout.dim();
    let mut data = vec![0.0; grid.len() * dim];

    // Radon profiles are additive over tilings: compute per patch, then sum
    // into column and wide-column profiles.
    let patch_profiles: Option<Vec<radon::Profiles>> = maps.radon.as_ref().map(|t| {
        (0..grid.len())
            .map(|i| t.profiles(&maps.gray, grid.patch_rect(i / grid.cols, i % grid.cols)))
            .collect()
    });
    let column_profiles: Option<Vec<radon::Profiles>> = patch_profiles.as_ref().map(|pp| {
        (0..grid.cols)
            .map(|c| {
                let parts: Vec<&radon::Profiles> = (0..grid.rows).map(|r| &pp[r * grid.cols + c]).collect();
                radon::sum(&parts)
            })
            .collect()
    });
    let wide_profiles: Option<Vec<radon::Profiles>> = column_profiles.as_ref().map(|cp| {
        (0..grid.cols)
            .map(|c| {
                let parts: Vec<&radon::Profiles> = (c.saturating_sub(1)..(c + 2).min(grid.cols)).map(|k| &cp[k]).collect();
                radon::sum(&parts)
            })
            .collect()
    });

    for slot in &layout.slots {
        let g = slot.group;
        let rd = g.region_dims();
        // Column-level descriptors are shared by every patch in a column.
        let mut col_desc = vec![0.0; grid.cols * rd];
        let mut wide_desc = vec![0.0; grid.cols * rd];
        for c in 0..grid.cols {
            maps.describe(
                g,
                grid.column_rect(c),
                column_profiles.as_ref().map(|v| &v[c]),
                &mut col_desc[c * rd..(c + 1) * rd],
            );
            maps.describe(
                g,
                grid.wide_rect(c),
                wide_profiles.as_ref().map(|v| &v[c]),
                &mut wide_desc[c * rd..(c + 1) * rd],
            );
        }
        for p in 0..grid.len() {
            let (r, c) = (p / grid.cols, p % grid.cols);
            let base = p * dim + slot.offset;
            maps.describe(
                g,
                grid.patch_rect(r, c),
                patch_profiles.as_ref().map(|v| &v[p]),
                &mut data[base..base + rd],
            );
            data[base + rd..base + 2 * rd].copy_from_slice(&col_desc[c * rd..(c + 1) * rd]);
            data[base + 2 * rd..base + 3 * rd].copy_from_slice(&wide_desc[c * rd..(c + 1) * rd]);
        }
    }

    Ok(FeatureMatrix {
        layout: layout.clone(),
        grid: *grid,
        data,
        flow_missing: prev.is_none() && layout.contains(FeatureGroup::FlowStats),
    })
}

/// Median wall-clock time per group over `reps` extractions of one frame.
pub fn measure_group_costs(frame: &Frame, prev: &Frame, grid: &PatchGrid, reps: usize) -> Result<GroupCosts> {
    let mut costs = [0.0; 5];
    for g in FeatureGroup::ALL {
        let layout = FeatureLayout::new(&[g], &GroupCosts::nominal());
        let mut times = Vec::with_capacity(reps.max(1));
        for _ in 0..reps.max(1) {
            let t0 = Instant::now();
            let m = extract_patch_features(frame, Some(prev), grid, &layout)?;
            std::hint::black_box(&m);
            times.push(t0.elapsed().as_secs_f64() * 1e3);
        }
        times.sort_by(f64::total_cmp);
        // Floor keeps every cost strictly positive even on coarse clocks.
        costs[g.index()] = times[times.len() / 2].max(1e-3);
    }
    Ok(GroupCosts(costs))
}
