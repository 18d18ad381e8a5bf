//! Cross-validation as amplitude disagreement, and the fusion topologies it enables.
//!
//! With known channels and known noise the composite projection energy
//! splits as
//!
//! ```text
//! tr(P_F̃ S̃) = Σ_ℓ tr(P_{H_ℓ} S̃_ℓℓ) − Σ_p tr(Q̃⁻¹_{E_pE_p} S̃_{E_pE_p})
//! ```
//!
//! where each partition step `p` splits a group of channels into two
//! sub-groups `X` and `Y`, `E = Â_X − Â_Y` is the difference of their ML
//! amplitude estimates and `Q̃_EE = Q̃_X + Q̃_Y` its covariance. Any binary
//! tree over the channels gives the same total, which is what lets a
//! daisy chain (or any other topology) fuse channels one message at a time.

use crate::channel::{common_modes, ChannelModel};
use crate::detectors::{uniform_alphas, Auxiliaries, DetectorReport, Panel};
use crate::error::{Error, Result};
use crate::linalg::{check_full_column_rank, hpd_inverse, projection_unchecked, trace_of_product, CMat, ComplexMatrix};
use crate::measurement::MeasurementSet;

/// Binary tree over channel indices; each internal node is one partition step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PartitionTree {
    Leaf(usize),
    Split(Box<PartitionTree>, Box<PartitionTree>),
}

impl PartitionTree {
    pub fn split(left: PartitionTree, right: PartitionTree) -> Self {
        PartitionTree::Split(Box::new(left), Box::new(right))
    }

    /// `((((c₀, c₁), c₂), c₃), …)`.
    pub fn daisy_chain(order: &[usize]) -> Result<Self> {
        let (&first, rest) = order
            .split_first()
            .ok_or_else(|| Error::Domain("partition tree needs at least one channel".into()))?;
        Ok(rest
            .iter()
            .fold(PartitionTree::Leaf(first), |acc, &c| PartitionTree::split(acc, PartitionTree::Leaf(c))))
    }

    /// Halves the ordered leaf list recursively.
    pub fn balanced(order: &[usize]) -> Result<Self> {
        match order.len() {
            0 => Err(Error::Domain("partition tree needs at least one channel".into())),
            1 => Ok(PartitionTree::Leaf(order[0])),
            n => {
                let (l, r) = order.split_at(n / 2);
                Ok(PartitionTree::split(Self::balanced(l)?, Self::balanced(r)?))
            }
        }
    }

    pub fn leaves(&self) -> Vec<usize> {
        match self {
            PartitionTree::Leaf(i) => vec![*i],
            PartitionTree::Split(l, r) => {
                let mut v = l.leaves();
                v.extend(r.leaves());
                v
            }
        }
    }

    /// Number of internal nodes.
    pub fn steps(&self) -> usize {
        match self {
            PartitionTree::Leaf(_) => 0,
            PartitionTree::Split(l, r) => 1 + l.steps() + r.steps(),
        }
    }

    /// Checks that the leaves are a permutation of `0..channels`.
    pub fn validate(&self, channels: usize) -> Result<()> {
        let mut leaves = self.leaves();
        leaves.sort_unstable();
        if leaves != (0..channels).collect::<Vec<_>>() {
            return Err(Error::Config(format!(
                "partition tree leaves {:?} are not a permutation of 0..{channels}",
                self.leaves()
            )));
        }
        Ok(())
    }
}

/// Sufficient statistics of a channel group: `G = F_Xᴴ F_X` and `b = F_Xᴴ X`.
#[derive(Clone, Debug)]
pub(crate) struct GroupStats {
    gram: CMat,
    cross: CMat,
}

impl GroupStats {
    pub(crate) fn leaf(f: &CMat, x: &CMat) -> Self {
        GroupStats {
            gram: f.adjoint() * f,
            cross: f.adjoint() * x,
        }
    }

    fn merge(&self, other: &GroupStats) -> GroupStats {
        GroupStats {
            gram: &self.gram + &other.gram,
            cross: &self.cross + &other.cross,
        }
    }

    /// `(Q, Â)` with `Q = G⁻¹` and `Â = Q b`.
    fn estimate(&self) -> Result<(CMat, CMat)> {
        let q = hpd_inverse(&self.gram, "group Gram matrix")?;
        let a = &q * &self.cross;
        Ok((q, a))
    }
}

/// `tr(Q_EE⁻¹ S_EE)` for `E = Â_X − Â_Y`, `Q_EE = Q_X + Q_Y`, `S_EE = EEᴴ/M`.
pub(crate) fn step_term(q_x: &CMat, a_x: &CMat, q_y: &CMat, a_y: &CMat) -> Result<f64> {
    let e = a_x - a_y;
    let m = e.ncols() as f64;
    let qee_inv = hpd_inverse(&(q_x + q_y), "amplitude-difference covariance")?;
    Ok(trace_of_product(&qee_inv, &(&e * e.adjoint())) / m)
}

/// One internal node of a partition tree.
#[derive(Clone, Debug)]
pub struct PartitionStep {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    /// `tr(Q̃⁻¹_EE S̃_EE)`.
    pub term: f64,
}

fn walk(tree: &PartitionTree, leaves: &[GroupStats], steps: &mut Vec<PartitionStep>) -> Result<GroupStats> {
    match tree {
        PartitionTree::Leaf(i) => Ok(leaves[*i].clone()),
        PartitionTree::Split(l, r) => {
            let sl = walk(l, leaves, steps)?;
            let sr = walk(r, leaves, steps)?;
            let (q_x, a_x) = sl.estimate()?;
            let (q_y, a_y) = sr.estimate()?;
            steps.push(PartitionStep {
                left: l.leaves(),
                right: r.leaves(),
                term: step_term(&q_x, &a_x, &q_y, &a_y)?,
            });
            Ok(sl.merge(&sr))
        }
    }
}

/// Per-step terms for arbitrary channel blocks `F_ℓ` and data `X_ℓ`.
pub(crate) fn partition_steps(f_blocks: &[CMat], x_blocks: &[CMat], tree: &PartitionTree) -> Result<Vec<PartitionStep>> {
    tree.validate(f_blocks.len())?;
    let leaves: Vec<GroupStats> = f_blocks
        .iter()
        .zip(x_blocks)
        .map(|(f, x)| GroupStats::leaf(f, x))
        .collect();
    let mut steps = Vec::with_capacity(tree.steps());
    walk(tree, &leaves, &mut steps)?;
    Ok(steps)
}

/// Channel blocks `(g_ℓ/s_ℓ) H_ℓ` and data `X_ℓ/s_ℓ` for given per-channel scales `s_ℓ`.
pub(crate) fn scaled_blocks(channels: &[ChannelModel], z: &MeasurementSet, scales: &[f64]) -> (Vec<CMat>, Vec<CMat>) {
    channels
        .iter()
        .zip(z.blocks())
        .zip(scales)
        .map(|((c, x), &s)| {
            (
                c.h().as_matrix().map(|v| v * c.gain() / s),
                x.as_matrix().map(|v| v / s),
            )
        })
        .unzip()
}

fn known_noise_blocks(channels: &[ChannelModel], z: &MeasurementSet) -> Result<(Vec<CMat>, Vec<CMat>)> {
    common_modes(channels)?;
    z.check_against(channels)?;
    let sigmas: Vec<f64> = channels.iter().map(|c| c.sigma()).collect();
    Ok(scaled_blocks(channels, z, &sigmas))
}

fn group_gram(channels: &[ChannelModel], group: &[usize]) -> Result<CMat> {
    let j = common_modes(channels)?;
    let mut g = CMat::zeros(j, j);
    for &i in group {
        let c = channels
            .get(i)
            .ok_or_else(|| Error::Domain(format!("channel {i} out of range")))?;
        let f = c.h().as_matrix().map(|v| v * c.gain() / c.sigma());
        g += f.adjoint() * f;
    }
    Ok(g)
}

/// `Q_EE = (F̃_XᴴF̃_X)⁻¹ + (F̃_YᴴF̃_Y)⁻¹` for two channel groups.
pub fn qee(channels: &[ChannelModel], x_group: &[usize], y_group: &[usize]) -> Result<ComplexMatrix> {
    if x_group.is_empty() || y_group.is_empty() {
        return Err(Error::Domain("both groups must be non-empty".into()));
    }
    let qx = hpd_inverse(&group_gram(channels, x_group)?, "first group Gram matrix")?;
    let qy = hpd_inverse(&group_gram(channels, y_group)?, "second group Gram matrix")?;
    ComplexMatrix::wrap(qx + qy)
}

/// Result of a recursive partition of the known-channel, known-noise
/// composite.
#[derive(Clone, Debug)]
pub struct PartitionCv {
    pub steps: Vec<PartitionStep>,
    /// `V = (1/L) Σ_p tr(Q̃⁻¹_{E_pE_p} S̃_{E_pE_p})`.
    pub cross_validation: f64,
}

impl PartitionCv {
    /// `Σ_p tr(Q̃⁻¹S̃_EE)` (so that `M` times this is the quadratic-form gap).
    pub fn total(&self) -> f64 {
        self.steps.iter().map(|s| s.term).sum()
    }
}

pub fn partition_cv(z: &MeasurementSet, channels: &[ChannelModel], tree: &PartitionTree) -> Result<PartitionCv> {
    let (f, x) = known_noise_blocks(channels, z)?;
    let steps = partition_steps(&f, &x, tree)?;
    let total: f64 = steps.iter().map(|s| s.term).sum();
    Ok(PartitionCv {
        steps,
        cross_validation: total / channels.len() as f64,
    })
}

/// The two-group projection form of the cross-validation energy.
#[derive(Clone, Debug)]
pub struct ProjectionForm {
    /// `tr(Z̃ᴴ P_{B_Z} Z̃)`.
    pub value: f64,
    /// `‖F̃ᴴ B_Z‖_max`, which vanishes identically.
    pub orthogonality: f64,
}

/// Builds `B_Z = [ (F̃_XᴴF̃_X)⁻¹F̃_Xᴴ , −(F̃_YᴴF̃_Y)⁻¹F̃_Yᴴ ]ᴴ` over the stacked
/// groups `[X; Y]` and evaluates `tr(Z̃ᴴ P_{B_Z} Z̃)`.
pub fn projection_form_cv(
    z: &MeasurementSet,
    channels: &[ChannelModel],
    x_group: &[usize],
    y_group: &[usize],
) -> Result<ProjectionForm> {
    let (f, x) = known_noise_blocks(channels, z)?;
    if x_group.is_empty() || y_group.is_empty() {
        return Err(Error::Domain("both groups must be non-empty".into()));
    }
    let stack = |group: &[usize], blocks: &[CMat]| -> Result<CMat> {
        let parts: Vec<ComplexMatrix> = group
            .iter()
            .map(|&i| {
                blocks
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Domain(format!("channel {i} out of range")))
                    .and_then(ComplexMatrix::wrap)
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&ComplexMatrix> = parts.iter().collect();
        Ok(ComplexMatrix::vstack(&refs)?.into_inner())
    };
    let (fx, fy) = (stack(x_group, &f)?, stack(y_group, &f)?);
    let (zx, zy) = (stack(x_group, &x)?, stack(y_group, &x)?);
    check_full_column_rank(&fx, "first group channel")?;
    check_full_column_rank(&fy, "second group channel")?;
    let qx = hpd_inverse(&(fx.adjoint() * &fx), "first group Gram matrix")?;
    let qy = hpd_inverse(&(fy.adjoint() * &fy), "second group Gram matrix")?;
    let bx = &fx * &qx;
    let by = (&fy * &qy).map(|v| -v);
    let (nx, ny, j) = (fx.nrows(), fy.nrows(), fx.ncols());
    let mut b = CMat::zeros(nx + ny, j);
    b.view_mut((0, 0), (nx, j)).copy_from(&bx);
    b.view_mut((nx, 0), (ny, j)).copy_from(&by);
    let mut fz = CMat::zeros(nx + ny, j);
    fz.view_mut((0, 0), (nx, j)).copy_from(&fx);
    fz.view_mut((nx, 0), (ny, j)).copy_from(&fy);
    let mut zz = CMat::zeros(nx + ny, zx.ncols());
    zz.view_mut((0, 0), (nx, zx.ncols())).copy_from(&zx);
    zz.view_mut((nx, 0), (ny, zx.ncols())).copy_from(&zy);

    let p = projection_unchecked(&b, "B_Z")?;
    let value = trace_of_product(&(zz.adjoint() * p), &zz);
    let orthogonality = (fz.adjoint() * &b).iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(ProjectionForm { value, orthogonality })
}

/// What one channel transmits in a daisy chain. Fields are optional so that
/// a malformed message is reported by name rather than by panic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChannelMessage {
    /// `Λ̃_ℓ = tr(P_{H_ℓ} S̃_ℓℓ)`.
    pub statistic: Option<f64>,
    /// `Â_ℓ` (`J × M`).
    pub amplitudes: Option<ComplexMatrix>,
    /// `Q̃_ℓℓ = (F̃_ℓᴴF̃_ℓ)⁻¹` (`J × J`).
    pub covariance: Option<ComplexMatrix>,
    /// `N_ℓ`.
    pub samples: Option<usize>,
    /// `M`.
    pub snapshots: Option<usize>,
}

impl ChannelMessage {
    /// The message channel `ℓ` would send, computed from its local data only.
    pub fn from_channel(channel: &ChannelModel, x: &ComplexMatrix) -> Result<Self> {
        if x.rows() != channel.samples() {
            return Err(Error::dim("rows of channel data", channel.samples(), x.rows()));
        }
        let s = channel.sigma();
        let f = channel.h().as_matrix().map(|v| v * channel.gain() / s);
        let xw = x.as_matrix().map(|v| v / s);
        let stats = GroupStats::leaf(&f, &xw);
        let (q, a) = stats.estimate()?;
        let m = x.cols() as f64;
        // P_H X̃ energy equals b_ℓᴴ Q b_ℓ for b_ℓ = F̃_ℓᴴ X̃_ℓ.
        let statistic = trace_of_product(&stats.cross.adjoint(), &(&q * &stats.cross)) / m;
        Ok(ChannelMessage {
            statistic: Some(statistic),
            amplitudes: Some(ComplexMatrix::wrap(a)?),
            covariance: Some(ComplexMatrix::wrap(q)?),
            samples: Some(channel.samples()),
            snapshots: Some(x.cols()),
        })
    }
}

struct ChainState {
    q: CMat,
    a: CMat,
    statistics: Vec<f64>,
    terms: f64,
    snapshots: usize,
}

fn require<T: Clone>(v: &Option<T>, index: usize, field: &'static str) -> Result<T> {
    v.clone().ok_or(Error::Protocol { index, field })
}

/// Folds channel messages in order; element `k` of the result is the
/// composite report over the first `k + 1` channels.
pub fn daisy_chain_fuse(messages: &[ChannelMessage]) -> Result<Vec<DetectorReport>> {
    let mut state: Option<ChainState> = None;
    let mut reports = Vec::with_capacity(messages.len());
    for (index, msg) in messages.iter().enumerate() {
        let statistic = require(&msg.statistic, index, "statistic")?;
        let a = require(&msg.amplitudes, index, "amplitudes")?.into_inner();
        let q = require(&msg.covariance, index, "covariance")?.into_inner();
        require(&msg.samples, index, "samples")?;
        let snapshots = require(&msg.snapshots, index, "snapshots")?;
        if q.nrows() != a.nrows() || q.ncols() != a.nrows() {
            return Err(Error::dim(format!("covariance of message {index}"), a.nrows(), q.nrows()));
        }
        if a.ncols() != snapshots {
            return Err(Error::dim(format!("amplitude columns of message {index}"), snapshots, a.ncols()));
        }
        state = Some(match state.take() {
            None => ChainState {
                q,
                a,
                statistics: vec![statistic],
                terms: 0.0,
                snapshots,
            },
            Some(mut s) => {
                if s.snapshots != snapshots || s.a.nrows() != a.nrows() {
                    return Err(Error::dim(
                        format!("shape of message {index}"),
                        format!("{}x{}", s.a.nrows(), s.snapshots),
                        format!("{}x{}", a.nrows(), snapshots),
                    ));
                }
                s.terms += step_term(&s.q, &s.a, &q, &a)?;
                let g_run = hpd_inverse(&s.q, "running covariance")?;
                let g_new = hpd_inverse(&q, "message covariance")?;
                let q_merged = hpd_inverse(&(&g_run + &g_new), "merged Gram matrix")?;
                s.a = &q_merged * (&g_run * &s.a + &g_new * &a);
                s.q = q_merged;
                s.statistics.push(statistic);
                s
            }
        });
        let s = state.as_ref().expect("state set above");
        let l = s.statistics.len() as f64;
        let v = s.terms / l;
        let weighted: f64 = s.statistics.iter().sum::<f64>() / l;
        reports.push(DetectorReport {
            panel: Panel::P11,
            composite: weighted - v,
            alphas: uniform_alphas(s.statistics.len()),
            per_channel: s.statistics.clone(),
            cross_validation: v,
            auxiliaries: Auxiliaries::default(),
            flags: Vec::new(),
        });
    }
    if reports.is_empty() {
        return Err(Error::Domain("daisy chain needs at least one message".into()));
    }
    Ok(reports)
}
