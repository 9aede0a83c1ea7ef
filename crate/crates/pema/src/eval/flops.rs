//! Analytic FLOPs-per-token accounting.
//!
//! Counting convention: a multiply-add is 2 FLOPs, element-wise ops are 1
//! FLOP each. The adapter delta counts only the adapter's own two
//! matrix-vector products (A, then the prediction head), matching the
//! usual low-rank-adapter accounting where the shared LM head multiply
//! belongs to the base forward pass.

/// Model dimensions a FLOPs estimate depends on.
#[derive(Debug, Clone, Copy)]
pub struct FlopsDims {
    /// Representation width.
    pub d: u64,
    /// Vocabulary size.
    pub v: u64,
    /// Context window length.
    pub k: u64,
    /// Hidden layer width.
    pub hidden: u64,
    /// Adapter rank.
    pub r: u64,
    /// External memory record count (kNN scan cost).
    pub memory_len: u64,
}

impl FlopsDims {
    /// Dimensions of the default toy setup.
    pub fn toy(r: u64, memory_len: u64) -> Self {
        FlopsDims {
            d: 64,
            v: 68,
            k: 8,
            hidden: 128,
            r,
            memory_len,
        }
    }
}

/// Decoding strategy being costed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlopsMethod {
    /// Bare model forward.
    Naive,
    /// Model forward plus the low-rank adapter.
    Adapter,
    /// Model forward plus a brute-force memory scan.
    Knn,
}

impl FlopsMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FlopsMethod::Naive => "naive",
            FlopsMethod::Adapter => "adapter",
            FlopsMethod::Knn => "knn",
        }
    }
}

/// Per-token forward FLOPs, split by component.
#[derive(Debug, Clone, Copy)]
pub struct FlopsReport {
    pub method: FlopsMethod,
    pub dims: FlopsDims,
    /// Base model forward pass.
    pub plm_forward: u64,
    /// Extra cost of adapter inference: exactly 4·d·r.
    pub adapter_delta: u64,
    /// Brute-force kNN scan cost model: 3·d·N.
    pub knn_search: u64,
}

impl FlopsReport {
    /// Total per-token cost of the method.
    pub fn total(&self) -> u64 {
        match self.method {
            FlopsMethod::Naive => self.plm_forward,
            FlopsMethod::Adapter => self.plm_forward + self.adapter_delta,
            FlopsMethod::Knn => self.plm_forward + self.knn_search,
        }
    }
}

/// Analytic per-token forward cost of the toy architecture:
/// position weighting (k·d multiplies), the hidden layer (2·hidden·k·d + 2·hidden
/// for bias and tanh), the projection (2·d·hidden + d), the LM head (2·v·d),
/// and the softmax (3·v).
pub fn flops_per_token(dims: FlopsDims, method: FlopsMethod) -> FlopsReport {
    let FlopsDims {
        d,
        v,
        k,
        hidden,
        r,
        memory_len,
    } = dims;
    let plm_forward =
        k * d + 2 * hidden * k * d + 2 * hidden + 2 * d * hidden + d + 2 * v * d + 3 * v;
    let adapter_delta = 4 * d * r;
    let knn_search = 3 * d * memory_len;
    FlopsReport {
        method,
        dims,
        plm_forward,
        adapter_delta,
        knn_search,
    }
}
