//! Greedy coding orders over gradient directions.

use std::str::FromStr;

use super::mesh::dot;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum OrderingStrategy {
    /// Next is the direction furthest from everything selected so far.
    #[default]
    Furthest,
    Closest,
    /// Acquisition order.
    Original,
}

impl FromStr for OrderingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "furthest" => Ok(OrderingStrategy::Furthest),
            "closest" => Ok(OrderingStrategy::Closest),
            "original" => Ok(OrderingStrategy::Original),
            _ => Err(Error::Options(format!("unknown ordering {s:?}"))),
        }
    }
}

impl OrderingStrategy {
    pub fn name(self) -> &'static str {
        match self {
            OrderingStrategy::Furthest => "furthest",
            OrderingStrategy::Closest => "closest",
            OrderingStrategy::Original => "original",
        }
    }
}

/// Angle between the axes of two unit directions, in `[0, π/2]`.
pub fn angular_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    dot(a, b).abs().min(1.0).acos()
}

const TIE: f64 = 1e-12;

/// Permutation of `0..directions.len()` starting at `start`. Ties go to the
/// lowest index.
pub fn order_volumes(directions: &[[f64; 3]], strategy: OrderingStrategy, start: usize) -> Vec<usize> {
    let n = directions.len();
    if strategy == OrderingStrategy::Original || n == 0 {
        return (0..n).collect();
    }
    let start = start.min(n - 1);
    let mut selected = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut order = Vec::with_capacity(n);
    let mut current = start;
    loop {
        selected[current] = true;
        order.push(current);
        if order.len() == n {
            return order;
        }
        for j in 0..n {
            if !selected[j] {
                nearest[j] = nearest[j].min(angular_distance(directions[current], directions[j]));
            }
        }
        let mut best: Option<usize> = None;
        for j in (0..n).filter(|&j| !selected[j]) {
            let better = match best {
                None => true,
                Some(b) => match strategy {
                    OrderingStrategy::Furthest => nearest[j] > nearest[b] + TIE,
                    _ => nearest[j] < nearest[b] - TIE,
                },
            };
            if better {
                best = Some(j);
            }
        }
        current = best.unwrap();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> Vec<[f64; 3]> {
        let h = 0.5f64.sqrt();
        vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [h, h, 0.0]]
    }

    #[test]
    fn original_is_identity() {
        let d: Vec<[f64; 3]> = (0..30).map(|i| [1.0, i as f64, 0.0]).collect();
        assert_eq!(order_volumes(&d, OrderingStrategy::Original, 5), (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn furthest_tie_break() {
        let o = order_volumes(&set(), OrderingStrategy::Furthest, 0);
        assert_eq!(o[1], 1);
        assert_eq!(o, vec![0, 1, 2, 3]);
    }

    #[test]
    fn closest_picks_diagonal() {
        let o = order_volumes(&set(), OrderingStrategy::Closest, 0);
        assert_eq!(o[1], 3);
    }

    #[test]
    fn metric_is_antipodal_and_symmetric() {
        let (a, b) = ([0.6, 0.8, 0.0], [0.0, 0.6, 0.8]);
        let d = angular_distance(a, b);
        assert_eq!(d, angular_distance(b, a));
        assert_eq!(d, angular_distance([-0.6, -0.8, -0.0], b));
        assert!(angular_distance(a, a) < 1e-7);
    }

    #[test]
    fn every_strategy_is_a_permutation() {
        let d: Vec<[f64; 3]> = (0..17)
            .map(|i| {
                let t = i as f64 * 0.7;
                let z = (i as f64 / 17.0) - 0.5;
                let r = (1.0 - z * z).sqrt();
                [r * t.cos(), r * t.sin(), z]
            })
            .collect();
        for s in [OrderingStrategy::Furthest, OrderingStrategy::Closest, OrderingStrategy::Original] {
            let mut o = order_volumes(&d, s, 3);
            o.sort_unstable();
            assert_eq!(o, (0..17).collect::<Vec<_>>());
        }
    }
}
