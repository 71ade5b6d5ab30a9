//! Shared fixtures for the criterion benchmarks.

use xfbq_core::{
    build_index, estimate_scale, generate_synthetic, BitWidth, Distribution, FloatMatrix, Index, QuantParams,
};

pub struct Fixture {
    pub docs: FloatMatrix,
    pub queries: FloatMatrix,
    pub index: Index,
}

/// `n` synthetic unit documents and `queries` queries of dimension `dim`,
/// indexed at the 98th-percentile scale.
pub fn fixture(n: usize, queries: usize, dim: usize, doc_bits: u8, query_bits: u8) -> Fixture {
    let docs = generate_synthetic(n, dim, 1, Distribution::GaussianNormalized)
        .unwrap()
        .data;
    let queries = generate_synthetic(queries, dim, 2, Distribution::GaussianNormalized)
        .unwrap()
        .data;
    let scale = estimate_scale(&docs, 0.98).unwrap();
    let params = QuantParams::new(
        BitWidth::new(doc_bits).unwrap(),
        BitWidth::new(query_bits).unwrap(),
        scale,
        dim,
    )
    .unwrap();
    let index = build_index(&docs, params, false).unwrap();
    Fixture { docs, queries, index }
}
