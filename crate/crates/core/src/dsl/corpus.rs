//! Built-in programs: nine searched mechanisms and four classic seeds.
//!
//! Texts are stored in canonical layout; only their `#` comment lines differ
//! from `print(parse(text))`.

use super::DslError;

pub const BUILTIN_NAMES: [&str; 13] = [
    "cora-appnp-residual",
    "citeseer-att-residual",
    "pubmed-pruned-residual",
    "computer-gpr2",
    "photo-scaled-residual",
    "chameleon-gated",
    "squirrel-att-stack",
    "texas-powersum-att",
    "cornell-attn-mix",
    "gcn",
    "appnp",
    "gpr",
    "fagcn-lite",
];

/// The classic programs used to initialize a search.
pub const SEED_NAMES: [&str; 4] = ["gcn", "appnp", "gpr", "fagcn-lite"];

const CORA: &str = "\
mechanism cora-appnp-residual {
  consts {
    K = 4;
  }
  params {
    alpha: scalar = const(0.15);
    W[k]: matrix(h, h) = glorot;
  }
  graph {
    Ahat = sym_norm(c = 4);
  }
  init {
    Z = alpha * X;
  }
  # Running accumulation: each step adds alpha (1 - alpha)^k Ahat Z W[k],
  # where Z is the value left by the previous step.
  step k in 1..K - 1 {
    Z = Z + alpha * pow(1 - alpha, k) * spmm(Ahat, Z) @ W[k];
  }
  final {
    Z = pow(1 - alpha, K) * spmm(Ahat, Z) @ W[K] + Z;
  }
  out {
    Y = Z;
  }
}
";

const CITESEER: &str = "\
mechanism citeseer-att-residual {
  consts {
    K = 4;
  }
  params {
    # one attention weight per node, applied as a row scaling
    Att: vector(n) = ones;
    W[k]: matrix(h, h) = glorot;
  }
  graph {
    Ahat = sym_norm(c = 2);
  }
  init {
    Z = Att * X;
  }
  step k in 1..K - 1 {
    Z = Z + (Att * spmm(Ahat, Z) @ W[k] + 0.2 * X_raw);
  }
  out {
    Y = Z;
  }
}
";

const PUBMED: &str = "\
mechanism pubmed-pruned-residual {
  consts {
    K = 4;
  }
  params {
    alpha: scalar = const(0.25);
    beta: scalar = const(0.4);
    gamma: scalar = const(0.25);
    W[k]: matrix(h, h) = glorot;
  }
  graph {
    Abar = pruned_norm(c = 2);
  }
  init {
    Z = alpha * X + gamma * X_raw;
  }
  step k in 1..K {
    Z = Z + beta * relu(spmm(Abar, Z) @ W[k]);
  }
  out {
    Y = Z;
  }
}
";

const COMPUTER: &str = "\
mechanism computer-gpr2 {
  consts {
    K = 2;
  }
  params {
    alpha: scalar = const(0.1);
    W[k]: matrix(h, h) = glorot;
  }
  graph {
    Ahat = sym_norm(c = 2);
  }
  init {
    P = X;
    a = 1;
    norm = 1;
    Z = X;
  }
  # Z accumulates alpha^k Ahat^k X W[k]; norm accumulates |alpha^k|,
  # written as relu(a) + relu(-a).
  step k in 1..K {
    P = spmm(Ahat, P);
    a = a * alpha;
    norm = norm + relu(a) + relu(-a);
    Z = Z + a * P @ W[k];
  }
  out {
    Y = Z / norm;
  }
}
";

const PHOTO: &str = "\
mechanism photo-scaled-residual {
  consts {
    K = 3;
  }
  params {
    beta: scalar = const(0.7);
    gamma: scalar = const(0.3);
    W[k]: matrix(h, h) = glorot;
  }
  graph {
    Ahat = sym_norm(c = 2);
  }
  init {
    Z = (beta + gamma) * X;
  }
  step k in 1..K {
    Z = Z + beta * gamma * spmm(Ahat, Z) @ W[k];
  }
  out {
    Y = Z;
  }
}
";

const CHAMELEON: &str = "\
mechanism chameleon-gated {
  consts {
    K = 1;
  }
  params {
    alpha: scalar = const(1);
    W1: matrix(h, h) = glorot;
    W2: matrix(h, h) = glorot;
    b: vector(h) = zeros;
  }
  graph {
    At = sym_norm(c = 0);
  }
  out {
    Y = tanh(X @ W1 + b + sigmoid(alpha) * spmm(At, X_raw) @ W2);
  }
}
";

const SQUIRREL: &str = "\
mechanism squirrel-att-stack {
  consts {
    K = 1;
  }
  params {
    Att: vector(n) = ones;
    W0: matrix(h, h) = glorot;
    W1: matrix(h, h) = glorot;
    W2: matrix(h, h) = glorot;
    W3: matrix(h, h) = glorot;
    b0: vector(h) = zeros;
    b1: vector(h) = zeros;
  }
  graph {
    Ahat = sym_norm(c = 2);
  }
  init {
    XA = softmax_rows(Att * X);
    Z0 = spmm(Ahat, X @ W0 + b0) @ W1;
    Z1 = spmm(Ahat, Z0 @ W2 + b1) @ W3;
  }
  # W3 and b1 are shared with the second propagation.
  out {
    Y = Z1 * XA @ W3 + b1;
  }
}
";

const TEXAS: &str = "\
mechanism texas-powersum-att {
  consts {
    K = 4;
  }
  params {
    W1: matrix(h, h) = glorot;
    W2: matrix(h, c) = glorot;
    Att: vector(n) = ones;
  }
  graph {
    At = sym_norm(c = 0);
  }
  init {
    P = spmm(At, X);
    S = P;
  }
  # S = sum of At^k X for k = 1..K
  step k in 2..K {
    P = spmm(At, P);
    S = S + P;
  }
  out {
    Y = elu((X_raw @ W1 + S) * Att) @ W2;
  }
}
";

const CORNELL: &str = "\
mechanism cornell-attn-mix {
  consts {
    K = 1;
  }
  params {
    W1: matrix(h, h) = glorot;
    W2: matrix(h, h) = glorot;
    a_src: matrix(h, 1) = glorot;
    a_dst: matrix(h, 1) = glorot;
  }
  graph {
    At = sym_norm(c = 0);
  }
  # attention coefficients over each node's neighbors in A
  out {
    Y = spmm(At, X) @ W1 + attn_agg(A, X_raw @ a_src, X_raw @ a_dst, X_raw @ W2);
  }
}
";

const GCN: &str = "\
mechanism gcn {
  consts {
    K = 1;
  }
  params {
    W[k]: matrix(h, h) = glorot;
  }
  graph {
    Ahat = sym_norm(c = 1);
  }
  init {
    Z = X;
  }
  step k in 1..K {
    Z = spmm(Ahat, Z) @ W[k];
  }
  out {
    Y = Z;
  }
}
";

const APPNP: &str = "\
mechanism appnp {
  consts {
    K = 10;
    alpha = 0.1;
  }
  graph {
    Ahat = sym_norm(c = 1);
  }
  init {
    Z = X;
  }
  step k in 1..K {
    Z = (1 - alpha) * spmm(Ahat, Z) + alpha * X;
  }
  out {
    Y = Z;
  }
}
";

const GPR: &str = "\
mechanism gpr {
  consts {
    K = 10;
    alpha = 0.1;
  }
  params {
    g0: scalar = const(alpha);
    g[k]: scalar = const(alpha * pow(1 - alpha, k));
  }
  graph {
    Ahat = sym_norm(c = 1);
  }
  init {
    P = X;
    Z = g0 * X;
  }
  step k in 1..K {
    P = spmm(Ahat, P);
    Z = Z + g[k] * P;
  }
  out {
    Y = Z;
  }
}
";

const FAGCN: &str = "\
mechanism fagcn-lite {
  # sign = 1 starts low-pass; sign = -1 starts high-pass.
  consts {
    K = 2;
    sign = 1;
    eps = 0.3;
  }
  params {
    g[k]: scalar = const(sign);
  }
  graph {
    Ahat = sym_norm(c = 0);
  }
  init {
    Z = X;
  }
  step k in 1..K {
    Z = eps * X + tanh(g[k]) * spmm(Ahat, Z);
  }
  out {
    Y = Z;
  }
}
";

/// Program text of a built-in mechanism.
pub fn builtin(name: &str) -> Result<&'static str, DslError> {
    Ok(match name {
        "cora-appnp-residual" => CORA,
        "citeseer-att-residual" => CITESEER,
        "pubmed-pruned-residual" => PUBMED,
        "computer-gpr2" => COMPUTER,
        "photo-scaled-residual" => PHOTO,
        "chameleon-gated" => CHAMELEON,
        "squirrel-att-stack" => SQUIRREL,
        "texas-powersum-att" => TEXAS,
        "cornell-attn-mix" => CORNELL,
        "gcn" => GCN,
        "appnp" => APPNP,
        "gpr" => GPR,
        "fagcn-lite" => FAGCN,
        other => return Err(DslError::UnknownBuiltin(other.to_string())),
    })
}
