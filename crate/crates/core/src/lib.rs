//! XOR-friendly binary quantization for exhaustive top-K cosine search.
//!
//! Floating-point vectors are quantized into a few sign digits per component
//! and packed as bit planes. Inner products between a quantized query and
//! every document reduce to XOR, popcount and shifts, and decode exactly to
//! the inner product of the quantized values. A histogram over the integer
//! distances selects the K-th smallest, an optional extra distance widens the
//! candidate set, and candidates are refined by exact float similarity.
//!
//! ```
//! use xfbq_core::{build_index, generate_synthetic, k_select, Distribution, QuantParams, SearchRequest};
//!
//! let docs = generate_synthetic(1000, 128, 7, Distribution::GaussianNormalized).unwrap();
//! let params = QuantParams::with_defaults(4.0, 128).unwrap();
//! let index = build_index(&docs.data, params, false).unwrap();
//! let query = docs.data.row(42);
//! let result = k_select(&index, &SearchRequest::new(query, 5, 200).unwrap()).unwrap();
//! assert_eq!(result.hits[0].id, 42);
//! ```

pub mod bitplane;
pub mod dataio;
pub mod distance;
pub mod error;
pub mod index;
pub mod kernel_bench;
pub mod matrix;
pub mod metrics;
pub mod quant;
pub mod search;

pub use bitplane::{pack_vector, quantize_vector, unpack_vector, PackedMatrix, PackedRef, PackedVector};
pub use dataio::{
    generate_synthetic, read_fvecs, read_ivecs, write_fvecs, write_ivecs, Distribution, VectorDataset,
};
pub use distance::{
    batch_distances, decode_inner_product, distance_upper_bound, packed_distance, Popcount, QuantizedDistance,
};
pub use error::{Error, Result};
pub use index::{build_index, estimate_scale, load_index, normalize_rows, save_index, Index, QuantParams};
pub use matrix::{FloatMatrix, IntMatrix, Matrix};
pub use metrics::{
    brute_force_topk, precision_at_k, quantization_error_report, PrecisionReport, QuantErrorReport,
};
pub use quant::{
    decode_scalar, decode_scalar_product, quantize_scalar, sigma, sigma_inverse, xor_scalar_product,
    BitWidth, ScalarCode, SignDigit,
};
pub use search::{
    gather_candidates, histogram_kth_distance, k_select, refine, suggest_extra_distance, DistanceHistogram,
    Hit, SearchRequest, SearchResult, StageTimings,
};
