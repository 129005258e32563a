//! Architecture budgets `(L, d, k, H, r)` stated by the approximation theorems.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transformer::Architecture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TheoremId {
    #[serde(rename = "shallow_pleT")]
    ShallowPleT,
    #[serde(rename = "deep_pleT")]
    DeepPleT,
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "shallow_pgtT")]
    ShallowPgtT,
    #[serde(rename = "deep_pgtT")]
    DeepPgtT,
    #[serde(rename = "cpwl")]
    Cpwl,
}

impl TheoremId {
    pub const ALL: [TheoremId; 6] = [
        TheoremId::ShallowPleT,
        TheoremId::DeepPleT,
        TheoremId::Relu,
        TheoremId::ShallowPgtT,
        TheoremId::DeepPgtT,
        TheoremId::Cpwl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::ShallowPleT => "shallow_pleT",
            TheoremId::DeepPleT => "deep_pleT",
            TheoremId::Relu => "relu",
            TheoremId::ShallowPgtT => "shallow_pgtT",
            TheoremId::DeepPgtT => "deep_pgtT",
            TheoremId::Cpwl => "cpwl",
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown theorem id `{s}`")))
    }
}

/// Size parameters the budgets depend on. `m` is the output width per token
/// (the widest layer for deep nets), `p` the largest rank, `depth` the number
/// of maxout or hidden ReLU layers. For CPWL pairs `p` is the rank `N` of `g`
/// and `h` and `m` the output width of `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetDims {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub p: usize,
    pub s: usize,
    pub depth: usize,
}

/// `ceil((p - 1) / (s - 1))`, at least one stage.
pub fn tournament_rounds(p: usize, s: usize) -> usize {
    if p <= s || s < 2 {
        return 1;
    }
    (p - 1).div_ceil(s - 1)
}

pub fn theorem_budget(id: TheoremId, dims: &BudgetDims) -> Architecture {
    let BudgetDims {
        n,
        m,
        t,
        p,
        s,
        depth,
    } = *dims;
    let ff = |r_prime: usize| 4 * (r_prime + 1) * (t + 3);
    let (depth_l, d_prime, heads, r) = match id {
        TheoremId::ShallowPleT => (3, n.max(m * (t * p + t + 1)), t * m * p, ff(n)),
        TheoremId::DeepPleT => (
            3 * depth,
            n.max(m * ((t + 1) * (p + 1) + 1)),
            (t + 1) * m * p,
            ff(n.max(m * p)),
        ),
        TheoremId::Relu => (
            3 * depth + 1,
            n.max(m * (3 * (t + 1) + 1)),
            2 * (t + 1) * m,
            ff(n.max(2 * m)),
        ),
        TheoremId::ShallowPgtT => {
            let (d_prime, r_prime) = if s >= p {
                (n.max(m * (t * p + t + 1)), n)
            } else {
                (n + m * ((t + 1) * (s + 1) + 1), (n + m).max(m * s))
            };
            (
                3 * tournament_rounds(p, s),
                d_prime,
                (t + 1) * m * s.min(p),
                ff(r_prime),
            )
        }
        TheoremId::DeepPgtT => {
            let (d_prime, r_prime) = if s >= p {
                (n.max(m * ((t + 1) * (p + 1) + 1)), n.max(m * p))
            } else {
                (n.max(m) + m * ((t + 1) * (s + 1) + 1), (n + m).max(m * s))
            };
            (
                3 * tournament_rounds(p, s) * depth,
                d_prime,
                (t + 1) * m * s.min(p),
                ff(r_prime),
            )
        }
        TheoremId::Cpwl => (
            3 * tournament_rounds(p, t),
            n + 2 * m * (t + 1) * (t + 1) + 2 * m,
            2 * m * t * (t + 1),
            ff((n + 2 * m).max(2 * m * t)),
        ),
    };
    Architecture {
        depth: depth_l,
        d: d_prime + t + 1,
        k: 2,
        heads,
        r,
    }
}

/// Compiled sizes against a theorem's budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetAudit {
    pub theorem_id: TheoremId,
    pub dims: BudgetDims,
    pub claimed: Architecture,
    pub actual: Architecture,
    pub within_budget: bool,
}

impl BudgetAudit {
    pub fn new(theorem_id: TheoremId, dims: BudgetDims, actual: Architecture) -> Self {
        let claimed = theorem_budget(theorem_id, &dims);
        let within_budget = actual.depth <= claimed.depth
            && actual.d <= claimed.d
            && actual.k <= claimed.k
            && actual.heads <= claimed.heads
            && actual.r <= claimed.r;
        BudgetAudit {
            theorem_id,
            dims,
            claimed,
            actual,
            within_budget,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(n: usize, m: usize, t: usize, p: usize, s: usize, depth: usize) -> BudgetDims {
        BudgetDims {
            n,
            m,
            t,
            p,
            s,
            depth,
        }
    }

    #[test]
    fn shallow_example_tuple() {
        let a = theorem_budget(TheoremId::ShallowPleT, &dims(1, 1, 2, 2, 2, 1));
        assert_eq!((a.depth, a.d, a.k, a.heads, a.r), (3, 10, 2, 4, 40));
    }

    #[test]
    fn relu_depth() {
        assert_eq!(theorem_budget(TheoremId::Relu, &dims(1, 1, 2, 2, 2, 1)).depth, 4);
        assert_eq!(theorem_budget(TheoremId::Relu, &dims(1, 1, 2, 2, 2, 2)).depth, 7);
    }

    #[test]
    fn tournament_depths() {
        assert_eq!(tournament_rounds(5, 2), 4);
        assert_eq!(tournament_rounds(5, 3), 2);
        assert_eq!(tournament_rounds(3, 3), 1);
        let a = theorem_budget(TheoremId::ShallowPgtT, &dims(1, 1, 3, 5, 3, 1));
        assert_eq!(a.depth, 6);
        let a = theorem_budget(TheoremId::DeepPgtT, &dims(1, 1, 3, 5, 3, 2));
        assert_eq!(a.depth, 12);
    }

    #[test]
    fn ids_round_trip() {
        for id in TheoremId::ALL {
            assert_eq!(id.as_str().parse::<TheoremId>().unwrap(), id);
        }
        assert!("nope".parse::<TheoremId>().is_err());
    }
}
