//! Graph pooling operators.
//!
//! All of them map a variable-size node representation matrix H (n×f) to a
//! fixed-size output, and all are invariant to row permutations of H:
//!
//! - first-order baselines: columnwise sum / average / max
//! - `sopool`:        HᵀH, the sum of per-node outer products
//! - `sopool_bimap`:  flatten(WᵀHᵀHW) with a learned f×f′ mapping
//! - `sopool_attn`:   HᵀHμ with a learned vector μ
//! - `sopool_mattn`:  UHᵀH, k attention heads stacked into pooled node rows
//! - `covpool`:       the mean-centered comparator (H−1H̄)ᵀ(H−1H̄)
//! - `attnpool`:      the softmax-normalized comparator HᵀSoftmax(Hμ)
//!
//! `update_adjacency` carries the pooled graph's structure: C = UHᵀ and
//! A′ = CACᵀ. `covpool` and `attnpool` are the comparators whose collisions
//! the `distinguish` module reproduces.

pub mod tape;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PoolKind {
    Sum,
    Avg,
    Max,
    /// Flattened HᵀH.
    Sopool,
    SopoolBimap,
    SopoolAttn,
    SopoolMattn,
    CovPool,
    AttnPool,
}

impl PoolKind {
    pub const ALL: [PoolKind; 9] = [
        PoolKind::Sum,
        PoolKind::Avg,
        PoolKind::Max,
        PoolKind::Sopool,
        PoolKind::SopoolBimap,
        PoolKind::SopoolAttn,
        PoolKind::SopoolMattn,
        PoolKind::CovPool,
        PoolKind::AttnPool,
    ];
}

impl std::fmt::Display for PoolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PoolKind::Sum => "sum",
            PoolKind::Avg => "avg",
            PoolKind::Max => "max",
            PoolKind::Sopool => "sopool",
            PoolKind::SopoolBimap => "sopool_bimap",
            PoolKind::SopoolAttn => "sopool_attn",
            PoolKind::SopoolMattn => "sopool_mattn",
            PoolKind::CovPool => "covpool",
            PoolKind::AttnPool => "attnpool",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for PoolKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "sum" => Ok(PoolKind::Sum),
            "avg" | "mean" => Ok(PoolKind::Avg),
            "max" => Ok(PoolKind::Max),
            "sopool" | "sopool-flatten" => Ok(PoolKind::Sopool),
            "sopool-bimap" => Ok(PoolKind::SopoolBimap),
            "sopool-attn" => Ok(PoolKind::SopoolAttn),
            "sopool-mattn" | "sopool-m-attn" => Ok(PoolKind::SopoolMattn),
            "covpool" => Ok(PoolKind::CovPool),
            "attnpool" => Ok(PoolKind::AttnPool),
            other => Err(Error::Config(format!("unknown pooling '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstOrder {
    Sum,
    Avg,
    Max,
}

/// Columnwise sum / average / max of H, as an f×1 vector.
pub fn pool_first_order(node_reps: &DenseMatrix, mode: FirstOrder) -> DenseMatrix {
    let (n, f) = node_reps.shape();
    let mut out = DenseMatrix::zeros(f, 1);
    for j in 0..f {
        let mut acc = match mode {
            FirstOrder::Max => f64::NEG_INFINITY,
            _ => 0.0,
        };
        for i in 0..n {
            let v = node_reps.get(i, j);
            match mode {
                FirstOrder::Sum | FirstOrder::Avg => acc += v,
                FirstOrder::Max => acc = acc.max(v),
            }
        }
        if mode == FirstOrder::Avg {
            acc /= n as f64;
        }
        out.set(j, 0, acc);
    }
    out
}

/// Second-order pooling: HᵀH, symmetric positive semidefinite.
pub fn sopool(node_reps: &DenseMatrix) -> DenseMatrix {
    node_reps
        .transpose()
        .matmul(node_reps)
        .expect("inner dims agree by construction")
}

/// Bilinear-mapping second-order pooling: row-major flatten of WᵀHᵀHW,
/// an f′²×1 vector.
pub fn sopool_bimap(node_reps: &DenseMatrix, mapping: &DenseMatrix) -> Result<DenseMatrix> {
    if mapping.rows() != node_reps.cols() {
        return Err(Error::shape(
            "sopool_bimap",
            node_reps.shape_string(),
            mapping.shape_string(),
        ));
    }
    let hw = node_reps.matmul(mapping)?;
    Ok(sopool(&hw).flatten_column())
}

/// Attentional second-order pooling: HᵀHμ, evaluated as Hᵀ(Hμ) so memory
/// stays O(n·f) instead of O(f²).
pub fn sopool_attn(node_reps: &DenseMatrix, attention: &DenseMatrix) -> Result<DenseMatrix> {
    check_attention("sopool_attn", node_reps, attention)?;
    let weights = node_reps.matmul(attention)?;
    node_reps.transpose().matmul(&weights)
}

fn check_attention(
    op: &'static str,
    node_reps: &DenseMatrix,
    attention: &DenseMatrix,
) -> Result<()> {
    if attention.rows() != node_reps.cols() || attention.cols() != 1 {
        return Err(Error::shape(
            op,
            format!("{}x1", node_reps.cols()),
            attention.shape_string(),
        ));
    }
    Ok(())
}

/// Covariance pooling: (H − 1H̄)ᵀ(H − 1H̄) with H̄ the row mean. Centering
/// erases multiplicity information, which is exactly the collision the
/// distinguish module demonstrates.
pub fn covpool(node_reps: &DenseMatrix) -> DenseMatrix {
    let (n, f) = node_reps.shape();
    let mut mean = vec![0.0; f];
    for i in 0..n {
        for j in 0..f {
            mean[j] += node_reps.get(i, j);
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centered = node_reps.clone();
    for i in 0..n {
        for j in 0..f {
            centered.set(i, j, centered.get(i, j) - mean[j]);
        }
    }
    sopool(&centered)
}

/// Softmax-attention pooling: HᵀSoftmax(Hμ). The normalization makes it a
/// weighted mean of node representations.
pub fn attnpool(node_reps: &DenseMatrix, attention: &DenseMatrix) -> Result<DenseMatrix> {
    check_attention("attnpool", node_reps, attention)?;
    let scores = node_reps.matmul(attention)?;
    let max = scores
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.data().iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let weights =
        DenseMatrix::from_vec(scores.rows(), 1, exps.iter().map(|&e| e / total).collect())?;
    node_reps.transpose().matmul(&weights)
}

/// Multi-head attentional pooling: UHᵀH, the k pooled node rows. Row i
/// equals the attentional pooling under head μᵢ where U = [μ₁ … μ_k]ᵀ.
pub fn sopool_mattn(node_reps: &DenseMatrix, heads: &DenseMatrix) -> Result<DenseMatrix> {
    if heads.cols() != node_reps.cols() {
        return Err(Error::shape(
            "sopool_mattn",
            node_reps.shape_string(),
            heads.shape_string(),
        ));
    }
    heads.matmul(&sopool(node_reps))
}

/// A pooled graph: k×k adjacency, k×f node representations, and the k×n
/// contribution matrix that produced them.
#[derive(Debug, Clone)]
pub struct PooledGraph {
    pub adjacency: DenseMatrix,
    pub node_reps: DenseMatrix,
    pub contribution: DenseMatrix,
}

/// Hierarchical pooling step: C = UHᵀ, H′ = CH (= UHᵀH), A′ = CACᵀ.
/// A′ stays symmetric whenever A is; asymmetric inputs are rejected.
pub fn update_adjacency(
    adjacency: &DenseMatrix,
    node_reps: &DenseMatrix,
    heads: &DenseMatrix,
) -> Result<PooledGraph> {
    let n = node_reps.rows();
    if adjacency.shape() != (n, n) {
        return Err(Error::shape(
            "update_adjacency",
            format!("{n}x{n}"),
            adjacency.shape_string(),
        ));
    }
    if adjacency.max_asymmetry() > 1e-12 {
        return Err(Error::Integrity(
            "update_adjacency requires a symmetric adjacency matrix".into(),
        ));
    }
    if heads.cols() != node_reps.cols() {
        return Err(Error::shape(
            "update_adjacency",
            node_reps.shape_string(),
            heads.shape_string(),
        ));
    }
    let contribution = heads.matmul(&node_reps.transpose())?;
    let node_out = contribution.matmul(node_reps)?;
    let adj_out = contribution
        .matmul(adjacency)?
        .matmul(&contribution.transpose())?;
    Ok(PooledGraph {
        adjacency: adj_out,
        node_reps: node_out,
        contribution,
    })
}

/// Bias-free parameter count of pooling plus a 1-layer classifier over c
/// classes: flattened HᵀH costs f²c, the bilinear mapping f·f′ + f′²c, and
/// the attentional variant f + f·c.
pub fn count_classifier_params(
    kind: PoolKind,
    f: u64,
    f_prime: Option<u64>,
    classes: u64,
) -> Option<u64> {
    match kind {
        PoolKind::Sopool => Some(f * f * classes),
        PoolKind::SopoolBimap => f_prime.map(|fp| f * fp + fp * fp * classes),
        PoolKind::SopoolAttn => Some(f + f * classes),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
        DenseMatrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.range(-2.0, 2.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn first_order_on_small_matrix() {
        let h = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(pool_first_order(&h, FirstOrder::Sum).data(), &[4.0, 6.0]);
        assert_eq!(pool_first_order(&h, FirstOrder::Avg).data(), &[2.0, 3.0]);
        assert_eq!(pool_first_order(&h, FirstOrder::Max).data(), &[3.0, 4.0]);
    }

    #[test]
    fn first_order_single_row_is_that_row() {
        let h = DenseMatrix::from_rows(&[&[7.0, -3.0]]).unwrap();
        for mode in [FirstOrder::Sum, FirstOrder::Avg, FirstOrder::Max] {
            assert_eq!(pool_first_order(&h, mode).data(), &[7.0, -3.0]);
        }
    }

    #[test]
    fn sopool_identity_and_outer_product() {
        assert_eq!(sopool(&DenseMatrix::identity(2)), DenseMatrix::identity(2));
        let h = DenseMatrix::from_rows(&[&[1.0, 2.0]]).unwrap();
        assert_eq!(
            sopool(&h),
            DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap()
        );
    }

    #[test]
    fn sopool_permutation_invariant() {
        let mut rng = Rng::new(6);
        let h = random_matrix(7, 4, &mut rng);
        let perm = rng.random_permutation(7);
        let diff = sopool(&h).max_abs_diff(&sopool(&h.permute_rows(&perm)));
        assert!(diff < 1e-9);
    }

    #[test]
    fn sopool_transposition_associativity() {
        // (PH)ᵀ(PH) == Hᵀ PᵀP H == HᵀH, computed three ways
        let mut rng = Rng::new(16);
        let h = random_matrix(6, 3, &mut rng);
        let p = DenseMatrix::permutation(&rng.random_permutation(6));
        let ph = p.matmul(&h).unwrap();
        let route1 = ph.transpose().matmul(&ph).unwrap();
        let ptp = p.transpose().matmul(&p).unwrap();
        let route2 = h.transpose().matmul(&ptp).unwrap().matmul(&h).unwrap();
        let route3 = sopool(&h);
        assert!(route1.max_abs_diff(&route3) < 1e-9);
        assert!(route2.max_abs_diff(&route3) < 1e-9);
    }

    #[test]
    fn sopool_quadratic_forms_are_nonnegative() {
        // xᵀ(HᵀH)x = ‖Hx‖² ≥ 0 for random quadratic forms
        let mut rng = Rng::new(26);
        for _ in 0..100 {
            let h = random_matrix(1 + rng.below(8), 1 + rng.below(6), &mut rng);
            let g = sopool(&h);
            let x = random_matrix(g.rows(), 1, &mut rng);
            let q = x
                .transpose()
                .matmul(&g)
                .unwrap()
                .matmul(&x)
                .unwrap()
                .get(0, 0);
            assert!(q >= -1e-9, "quadratic form {q}");
        }
    }

    #[test]
    fn bimap_with_identity_mapping_is_flattened_sopool() {
        let mut rng = Rng::new(7);
        let h = random_matrix(5, 3, &mut rng);
        let got = sopool_bimap(&h, &DenseMatrix::identity(3)).unwrap();
        assert_eq!(got, sopool(&h).flatten_column());
    }

    #[test]
    fn bimap_output_length_is_fprime_squared() {
        let mut rng = Rng::new(8);
        let h = random_matrix(4, 160, &mut rng);
        let w = random_matrix(160, 32, &mut rng);
        let got = sopool_bimap(&h, &w).unwrap();
        assert_eq!(got.shape(), (1024, 1));
    }

    #[test]
    fn bimap_matches_per_node_outer_product_oracle() {
        // Σᵢ (Wᵀhᵢ)(Wᵀhᵢ)ᵀ flattened
        let mut rng = Rng::new(9);
        let h = random_matrix(6, 5, &mut rng);
        let w = random_matrix(5, 3, &mut rng);
        let mut acc = DenseMatrix::zeros(3, 3);
        for i in 0..6 {
            let hi = DenseMatrix::from_vec(5, 1, h.row(i).to_vec()).unwrap();
            let wh = w.transpose().matmul(&hi).unwrap();
            let outer = wh.matmul(&wh.transpose()).unwrap();
            acc = acc.add(&outer).unwrap();
        }
        let got = sopool_bimap(&h, &w).unwrap();
        assert!(got.max_abs_diff(&acc.flatten_column()) < 1e-9);
    }

    #[test]
    fn bimap_rejects_mismatched_mapping() {
        let h = DenseMatrix::zeros(2, 3);
        let w = DenseMatrix::zeros(4, 2);
        assert!(sopool_bimap(&h, &w).is_err());
    }

    #[test]
    fn attn_zero_vector_gives_zero() {
        let mut rng = Rng::new(10);
        let h = random_matrix(4, 3, &mut rng);
        let mu = DenseMatrix::zeros(3, 1);
        assert_eq!(sopool_attn(&h, &mu).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn attn_identity_reps() {
        let mu = DenseMatrix::from_rows(&[&[1.0], &[2.0]]).unwrap();
        let got = sopool_attn(&DenseMatrix::identity(2), &mu).unwrap();
        assert_eq!(got.data(), &[1.0, 2.0]);
    }

    #[test]
    fn attn_reassociation_routes_agree() {
        // Hᵀ(Hμ) vs (HᵀH)μ
        let mut rng = Rng::new(11);
        let h = random_matrix(8, 5, &mut rng);
        let mu = random_matrix(5, 1, &mut rng);
        let fast = sopool_attn(&h, &mu).unwrap();
        let gram_route = sopool(&h).matmul(&mu).unwrap();
        assert!(fast.max_abs_diff(&gram_route) < 1e-9);
    }

    #[test]
    fn covpool_identical_rows_collapse_to_zero() {
        let h = DenseMatrix::from_rows(&[&[3.0, 1.0], &[3.0, 1.0], &[3.0, 1.0]]).unwrap();
        assert_eq!(covpool(&h).max_abs(), 0.0);
        let single = DenseMatrix::from_rows(&[&[3.0, 1.0]]).unwrap();
        assert_eq!(covpool(&single).max_abs(), 0.0);
    }

    #[test]
    fn attnpool_constant_rows_ignore_multiplicity() {
        let mut rng = Rng::new(12);
        let mu = random_matrix(2, 1, &mut rng);
        let one = DenseMatrix::from_rows(&[&[3.0, 1.0]]).unwrap();
        let two = DenseMatrix::from_rows(&[&[3.0, 1.0], &[3.0, 1.0]]).unwrap();
        let a = attnpool(&one, &mu).unwrap();
        let b = attnpool(&two, &mu).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
        assert!(a.max_abs_diff(&DenseMatrix::from_vec(2, 1, vec![3.0, 1.0]).unwrap()) < 1e-12);
    }

    #[test]
    fn attnpool_zero_attention_is_column_mean() {
        let mut rng = Rng::new(13);
        let h = random_matrix(5, 3, &mut rng);
        let got = attnpool(&h, &DenseMatrix::zeros(3, 1)).unwrap();
        let mean = pool_first_order(&h, FirstOrder::Avg);
        assert!(got.max_abs_diff(&mean) < 1e-12);
    }

    #[test]
    fn mattn_single_head_equals_attn() {
        let mut rng = Rng::new(14);
        let h = random_matrix(6, 4, &mut rng);
        let mu = random_matrix(4, 1, &mut rng);
        let heads = mu.transpose();
        let pooled = sopool_mattn(&h, &heads).unwrap();
        assert_eq!(pooled.shape(), (1, 4));
        let attn = sopool_attn(&h, &mu).unwrap();
        assert!(pooled.transpose().max_abs_diff(&attn) < 1e-12);
    }

    #[test]
    fn mattn_identity_heads_give_gram_matrix() {
        let mut rng = Rng::new(15);
        let h = random_matrix(5, 3, &mut rng);
        let got = sopool_mattn(&h, &DenseMatrix::identity(3)).unwrap();
        assert!(got.max_abs_diff(&sopool(&h)) < 1e-12);
    }

    #[test]
    fn update_adjacency_zero_heads_zero_output() {
        let mut rng = Rng::new(17);
        let h = random_matrix(4, 3, &mut rng);
        let mut adj = DenseMatrix::zeros(4, 4);
        adj.set(0, 1, 1.0);
        adj.set(1, 0, 1.0);
        let pooled = update_adjacency(&adj, &h, &DenseMatrix::zeros(2, 3)).unwrap();
        assert_eq!(pooled.adjacency.max_abs(), 0.0);
        assert_eq!(pooled.node_reps.max_abs(), 0.0);
    }

    #[test]
    fn update_adjacency_identity_contribution_preserves_adjacency() {
        // contrived fixture: H = I so U·Hᵀ = U; pick U = I
        let n = 3;
        let h = DenseMatrix::identity(n);
        let mut adj = DenseMatrix::zeros(n, n);
        adj.set(0, 1, 1.0);
        adj.set(1, 0, 1.0);
        adj.set(1, 2, 1.0);
        adj.set(2, 1, 1.0);
        let pooled = update_adjacency(&adj, &h, &DenseMatrix::identity(n)).unwrap();
        assert!(pooled.adjacency.max_abs_diff(&adj) < 1e-12);
    }

    #[test]
    fn update_adjacency_keeps_symmetry() {
        let mut rng = Rng::new(18);
        for _ in 0..100 {
            let n = 2 + rng.below(6);
            let f = 1 + rng.below(4);
            let k = 1 + rng.below(4);
            let h = random_matrix(n, f, &mut rng);
            let u = random_matrix(k, f, &mut rng);
            let mut adj = DenseMatrix::zeros(n, n);
            for a in 0..n {
                for b in (a + 1)..n {
                    if rng.uniform() < 0.5 {
                        adj.set(a, b, 1.0);
                        adj.set(b, a, 1.0);
                    }
                }
            }
            let pooled = update_adjacency(&adj, &h, &u).unwrap();
            assert!(pooled.adjacency.max_asymmetry() < 1e-10);
        }
    }

    #[test]
    fn update_adjacency_rejects_asymmetric_input() {
        let h = DenseMatrix::zeros(2, 2);
        let u = DenseMatrix::zeros(1, 2);
        let mut adj = DenseMatrix::zeros(2, 2);
        adj.set(0, 1, 1.0);
        assert!(matches!(
            update_adjacency(&adj, &h, &u),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn classifier_param_counts_match_the_arithmetic() {
        for c in [2u64, 3, 5] {
            assert_eq!(
                count_classifier_params(PoolKind::Sopool, 160, None, c),
                Some(25_600 * c)
            );
            assert_eq!(
                count_classifier_params(PoolKind::SopoolBimap, 160, Some(32), c),
                Some(5_120 + 1_024 * c)
            );
            assert_eq!(
                count_classifier_params(PoolKind::SopoolAttn, 160, None, c),
                Some(160 + 160 * c)
            );
        }
        assert_eq!(
            count_classifier_params(PoolKind::Sopool, 1, None, 4),
            Some(4)
        );
        assert_eq!(
            count_classifier_params(PoolKind::SopoolAttn, 1, None, 4),
            Some(1 + 4)
        );
    }

    mod properties {
        use super::*;
        use crate::rng::Rng as SeededRng;
        use proptest::prelude::*;

        proptest! {
            // permutation invariance of every pooled output, and invariance
            // of the pooled graph under consistent (PAPᵀ, PH) relabeling
            #[test]
            fn pooling_is_invariant_to_node_order(
                n in 1usize..10,
                f in 1usize..6,
                values in proptest::collection::vec(-2.0..2.0f64, 120),
                perm_seed in 0u64..10_000,
            ) {
                let h = DenseMatrix::from_vec(n, f, values[..n * f].to_vec()).unwrap();
                let mu = DenseMatrix::from_vec(f, 1, values[n * f..n * f + f].to_vec()).unwrap();
                let w = DenseMatrix::from_vec(f, 2, values[60..60 + 2 * f].to_vec()).unwrap();
                let u = DenseMatrix::from_vec(3, f, values[80..80 + 3 * f].to_vec()).unwrap();
                let mut rng = SeededRng::new(perm_seed);
                let perm = rng.random_permutation(n);
                let hp = h.permute_rows(&perm);

                let tol = 1e-9;
                prop_assert!(sopool(&h).max_abs_diff(&sopool(&hp)) < tol);
                prop_assert!(covpool(&h).max_abs_diff(&covpool(&hp)) < tol);
                for mode in [FirstOrder::Sum, FirstOrder::Avg, FirstOrder::Max] {
                    prop_assert!(
                        pool_first_order(&h, mode).max_abs_diff(&pool_first_order(&hp, mode)) < tol
                    );
                }
                prop_assert!(sopool_attn(&h, &mu).unwrap().max_abs_diff(&sopool_attn(&hp, &mu).unwrap()) < tol);
                prop_assert!(attnpool(&h, &mu).unwrap().max_abs_diff(&attnpool(&hp, &mu).unwrap()) < tol);
                prop_assert!(sopool_bimap(&h, &w).unwrap().max_abs_diff(&sopool_bimap(&hp, &w).unwrap()) < tol);
                prop_assert!(sopool_mattn(&h, &u).unwrap().max_abs_diff(&sopool_mattn(&hp, &u).unwrap()) < tol);

                let mut adj = DenseMatrix::zeros(n, n);
                for a in 0..n {
                    for b in (a + 1)..n {
                        if rng.uniform() < 0.5 {
                            adj.set(a, b, 1.0);
                            adj.set(b, a, 1.0);
                        }
                    }
                }
                let p = DenseMatrix::permutation(&perm);
                let adj_p = p.matmul(&adj).unwrap().matmul(&p.transpose()).unwrap();
                let pooled = update_adjacency(&adj, &h, &u).unwrap();
                let pooled_p = update_adjacency(&adj_p, &hp, &u).unwrap();
                prop_assert!(pooled.adjacency.max_abs_diff(&pooled_p.adjacency) < tol);
                prop_assert!(pooled.node_reps.max_abs_diff(&pooled_p.node_reps) < tol);
                // the contribution matrix itself is equivariant: columns permute
                let mut c_perm = DenseMatrix::zeros(3, n);
                for row in 0..3 {
                    for (col, &src) in perm.iter().enumerate() {
                        c_perm.set(row, col, pooled.contribution.get(row, src));
                    }
                }
                prop_assert!(c_perm.max_abs_diff(&pooled_p.contribution) < tol);
            }
        }
    }

    #[test]
    fn pooled_sizes_do_not_depend_on_n() {
        let mut rng = Rng::new(19);
        let f = 4;
        let mu = random_matrix(f, 1, &mut rng);
        let w = random_matrix(f, 2, &mut rng);
        let u = random_matrix(3, f, &mut rng);
        for n in 1..=20 {
            let h = random_matrix(n, f, &mut rng);
            assert_eq!(pool_first_order(&h, FirstOrder::Sum).shape(), (f, 1));
            assert_eq!(sopool(&h).shape(), (f, f));
            assert_eq!(sopool_bimap(&h, &w).unwrap().shape(), (4, 1));
            assert_eq!(sopool_attn(&h, &mu).unwrap().shape(), (f, 1));
            assert_eq!(covpool(&h).shape(), (f, f));
            assert_eq!(attnpool(&h, &mu).unwrap().shape(), (f, 1));
            assert_eq!(sopool_mattn(&h, &u).unwrap().shape(), (3, f));
        }
    }
}
