//! Discriminative-power verification: which poolings can tell multisets of
//! node representations apart?
//!
//! The shipped fixture is the pair ({v}, {v, v}) with v = [3, 1]: the
//! centered pooling maps both to zero and the softmax-normalized pooling to
//! the same mean, while HᵀH and its attentional variant scale with
//! multiplicity and stay distinct. `sweep_multisets` brute-forces all
//! multiset pairs over a small alphabet and reports every collision.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::pooling::{self, FirstOrder, PoolKind};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Collision,
    Distinguished,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Collision => "collision",
            Verdict::Distinguished => "distinguished",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CollisionReport {
    pub pooling: PoolKind,
    pub left: String,
    pub right: String,
    /// Max-abs difference of the pooled outputs.
    pub distance: f64,
    pub verdict: Verdict,
    pub tolerance: f64,
    pub seed: u64,
}

/// Shared probe parameters for the parametric poolings, drawn once from a
/// seed so every reported collision is replayable.
#[derive(Debug, Clone)]
pub struct ProbeParams {
    pub attention: DenseMatrix,
    pub mapping: DenseMatrix,
    pub heads: DenseMatrix,
    pub seed: u64,
}

impl ProbeParams {
    pub fn seeded(feature_dim: usize, reduced_dim: usize, head_count: usize, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let attention = DenseMatrix::from_vec(
            feature_dim,
            1,
            (0..feature_dim).map(|_| rng.range(-1.0, 1.0)).collect(),
        )
        .expect("shape");
        let mapping = DenseMatrix::from_vec(
            feature_dim,
            reduced_dim,
            (0..feature_dim * reduced_dim)
                .map(|_| rng.range(-1.0, 1.0))
                .collect(),
        )
        .expect("shape");
        let heads = DenseMatrix::from_vec(
            head_count,
            feature_dim,
            (0..head_count * feature_dim)
                .map(|_| rng.range(-1.0, 1.0))
                .collect(),
        )
        .expect("shape");
        ProbeParams {
            attention,
            mapping,
            heads,
            seed,
        }
    }
}

/// Pooled output of one kind under the probe parameters, as a flat column.
pub fn pooled_output(kind: PoolKind, h: &DenseMatrix, probe: &ProbeParams) -> Result<DenseMatrix> {
    Ok(match kind {
        PoolKind::Sum => pooling::pool_first_order(h, FirstOrder::Sum),
        PoolKind::Avg => pooling::pool_first_order(h, FirstOrder::Avg),
        PoolKind::Max => pooling::pool_first_order(h, FirstOrder::Max),
        PoolKind::Sopool => pooling::sopool(h).flatten_column(),
        PoolKind::SopoolBimap => pooling::sopool_bimap(h, &probe.mapping)?,
        PoolKind::SopoolAttn => pooling::sopool_attn(h, &probe.attention)?,
        PoolKind::SopoolMattn => pooling::sopool_mattn(h, &probe.heads)?.flatten_column(),
        PoolKind::CovPool => pooling::covpool(h).flatten_column(),
        PoolKind::AttnPool => pooling::attnpool(h, &probe.attention)?,
    })
}

pub fn check_pair(
    h1: &DenseMatrix,
    h2: &DenseMatrix,
    kind: PoolKind,
    probe: &ProbeParams,
    tolerance: f64,
) -> Result<CollisionReport> {
    if h1.cols() != h2.cols() {
        return Err(Error::shape(
            "check_pair",
            h1.shape_string(),
            h2.shape_string(),
        ));
    }
    let a = pooled_output(kind, h1, probe)?;
    let b = pooled_output(kind, h2, probe)?;
    let distance = a.max_abs_diff(&b);
    Ok(CollisionReport {
        pooling: kind,
        left: describe(h1),
        right: describe(h2),
        distance,
        verdict: if distance < tolerance {
            Verdict::Collision
        } else {
            Verdict::Distinguished
        },
        tolerance,
        seed: probe.seed,
    })
}

fn describe(h: &DenseMatrix) -> String {
    let rows: Vec<String> = (0..h.rows())
        .map(|i| {
            let entries: Vec<String> = h.row(i).iter().map(|v| format!("{v}")).collect();
            format!("[{}]", entries.join(","))
        })
        .collect();
    format!("{{{}}}", rows.join(","))
}

/// The repeated-representation fixture: one node v versus two copies of v.
pub fn repetition_fixture() -> (DenseMatrix, DenseMatrix) {
    let v = [3.0, 1.0];
    let one = DenseMatrix::from_rows(&[&v]).expect("shape");
    let two = DenseMatrix::from_rows(&[&v, &v]).expect("shape");
    (one, two)
}

pub const FIXTURE_TOLERANCE: f64 = 1e-9;

/// Expected verdicts on the repetition fixture.
pub fn expected_fixture_verdicts() -> Vec<(PoolKind, Verdict)> {
    vec![
        (PoolKind::CovPool, Verdict::Collision),
        (PoolKind::AttnPool, Verdict::Collision),
        (PoolKind::Avg, Verdict::Collision),
        (PoolKind::Sopool, Verdict::Distinguished),
        (PoolKind::SopoolAttn, Verdict::Distinguished),
        (PoolKind::Sum, Verdict::Distinguished),
    ]
}

/// Runs the fixture for every expected verdict; the attentional probe must
/// have vvᵀμ ≠ 0, which the seeded parameters guarantee for the fixture v.
pub fn fixture_reports(seed: u64) -> Result<Vec<(CollisionReport, Verdict)>> {
    let (h1, h2) = repetition_fixture();
    let probe = ProbeParams::seeded(h1.cols(), 2, 2, seed);
    let activation = pooling::sopool_attn(&h1, &probe.attention)?;
    if activation.max_abs() < 1e-6 {
        return Err(Error::Contract(format!(
            "probe seed {seed} puts the attention vector in the fixture's null space; pick another seed"
        )));
    }
    expected_fixture_verdicts()
        .into_iter()
        .map(|(kind, expected)| {
            check_pair(&h1, &h2, kind, &probe, FIXTURE_TOLERANCE).map(|r| (r, expected))
        })
        .collect()
}

/// All multisets of sizes 1..=max_n over the alphabet, as row matrices.
fn enumerate_multisets(alphabet: &[Vec<f64>], max_n: usize) -> Vec<(String, DenseMatrix)> {
    let f = alphabet[0].len();
    let mut out = Vec::new();
    // multisets as non-decreasing index sequences
    let mut stack: Vec<Vec<usize>> = (0..alphabet.len()).map(|i| vec![i]).collect();
    while let Some(indices) = stack.pop() {
        let mut m = DenseMatrix::zeros(indices.len(), f);
        for (row, &ai) in indices.iter().enumerate() {
            for j in 0..f {
                m.set(row, j, alphabet[ai][j]);
            }
        }
        let name = format!(
            "multiset({})",
            indices
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join("")
        );
        out.push((name, m));
        if indices.len() < max_n {
            let last = *indices.last().expect("non-empty");
            for next in last..alphabet.len() {
                let mut extended = indices.clone();
                extended.push(next);
                stack.push(extended);
            }
        }
    }
    out.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then(a.0.cmp(&b.0)));
    out
}

pub const SWEEP_MAX_N: usize = 6;
const SWEEP_MAX_PAIRS: usize = 2_000_000;

/// Exhaustive collision sweep over multiset pairs; returns one report per
/// collision found, ordered canonically. No sampling — every pair is tested.
pub fn sweep_multisets(
    alphabet: &[Vec<f64>],
    max_n: usize,
    kinds: &[PoolKind],
    seed: u64,
    tolerance: f64,
) -> Result<Vec<CollisionReport>> {
    if alphabet.is_empty() {
        return Err(Error::EmptyInput("sweep_multisets"));
    }
    if max_n == 0 {
        return Err(Error::Config("sweep max-n must be at least 1".into()));
    }
    if max_n > SWEEP_MAX_N {
        return Err(Error::Budget(format!(
            "sweep max-n {max_n} exceeds the combinatorial guard {SWEEP_MAX_N}"
        )));
    }
    let f = alphabet[0].len();
    if alphabet.iter().any(|v| v.len() != f) {
        return Err(Error::shape("sweep_multisets", f, 0usize));
    }
    let multisets = enumerate_multisets(alphabet, max_n);
    let pairs = multisets.len() * (multisets.len() - 1) / 2;
    if pairs > SWEEP_MAX_PAIRS {
        return Err(Error::Budget(format!(
            "{} multisets give {pairs} pairs, over the {SWEEP_MAX_PAIRS} budget",
            multisets.len()
        )));
    }

    let probe = ProbeParams::seeded(f, 2.min(f), 2, seed);
    let mut collisions = Vec::new();
    for i in 0..multisets.len() {
        for j in (i + 1)..multisets.len() {
            for &kind in kinds {
                let a = pooled_output(kind, &multisets[i].1, &probe)?;
                let b = pooled_output(kind, &multisets[j].1, &probe)?;
                let distance = a.max_abs_diff(&b);
                if distance < tolerance {
                    collisions.push(CollisionReport {
                        pooling: kind,
                        left: multisets[i].0.clone(),
                        right: multisets[j].0.clone(),
                        distance,
                        verdict: Verdict::Collision,
                        tolerance,
                        seed,
                    });
                }
            }
        }
    }
    Ok(collisions)
}

pub fn reports_to_csv(reports: &[CollisionReport]) -> String {
    let mut out = String::from("pooling,left,right,distance,verdict,tolerance,seed\n");
    for r in reports {
        out.push_str(&format!(
            "{},\"{}\",\"{}\",{:.3e},{},{:.1e},{}\n",
            r.pooling, r.left, r.right, r.distance, r.verdict, r.tolerance, r.seed
        ));
    }
    out
}
