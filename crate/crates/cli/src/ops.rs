//! Operator literals in configs: Pauli strings and dense complex matrices.

use qtherm::linalg::{self, pauli, CMat, C64};

/// `"XXI"` ↦ `σ_x ⊗ σ_x ⊗ 1`, leftmost letter on the first listed site.
pub fn parse_pauli(s: &str) -> Result<CMat, String> {
    if s.is_empty() {
        return Err("empty Pauli string".into());
    }
    pauli::string(s).map_err(|e| e.to_string())
}

/// `[[[re, im], …], …]` rows of complex entries.
pub fn dense_from_literal(rows: &[Vec<[f64; 2]>]) -> Result<CMat, String> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(format!("matrix literal must be square, got {n} rows"));
    }
    Ok(CMat::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

/// Embeds `op` (tensor order following `sites`) into `n_sites` factors of
/// dimension `local_dim`.
pub fn embed_term(op: &CMat, sites: &[usize], n_sites: usize, local_dim: usize) -> qtherm::Result<CMat> {
    linalg::embed(op, &vec![local_dim; n_sites], sites)
}
