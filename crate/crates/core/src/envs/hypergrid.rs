//! `H^d` hypergrid with a multimodal corner reward.
//!
//! Starting at the origin, each action increments one coordinate; stop is
//! valid everywhere, so every cell is a terminal object.

use serde::{Deserialize, Serialize};

use crate::env::{ActionId, EnvError, Environment, StateKey};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HypergridState {
    pub coords: Vec<u8>,
}

/// `R(x) = r0 + r1·[all |u_i − ½| > outer] + r2·[all |u_i − ½| > inner]`
/// with `u_i = x_i / (H − 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypergridReward {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
    pub outer_band: f64,
    pub inner_band: f64,
}

impl Default for HypergridReward {
    fn default() -> Self {
        Self {
            r0: 1e-3,
            r1: 0.5,
            r2: 2.0,
            outer_band: 0.25,
            inner_band: 0.4,
        }
    }
}

impl HypergridReward {
    pub fn reward(&self, coords: &[u8], side: usize) -> f64 {
        let dist = |c: u8| {
            let u = if side > 1 { c as f64 / (side - 1) as f64 } else { 0.0 };
            (u - 0.5).abs()
        };
        let outer = coords.iter().all(|&c| dist(c) > self.outer_band);
        let inner = coords.iter().all(|&c| dist(c) > self.inner_band);
        self.r0 + if outer { self.r1 } else { 0.0 } + if inner { self.r2 } else { 0.0 }
    }
}

#[derive(Clone, Debug)]
pub struct Hypergrid {
    dims: usize,
    side: usize,
    reward: HypergridReward,
}

impl Hypergrid {
    pub fn new(dims: usize, side: usize, reward: HypergridReward) -> Self {
        assert!(dims >= 1 && (1..=256).contains(&side));
        Self { dims, side, reward }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn reward_params(&self) -> &HypergridReward {
        &self.reward
    }

    pub fn state(&self, coords: &[u8]) -> HypergridState {
        assert_eq!(coords.len(), self.dims);
        HypergridState {
            coords: coords.to_vec(),
        }
    }

    fn in_outer_band(&self, c: u8) -> bool {
        let u = if self.side > 1 {
            c as f64 / (self.side - 1) as f64
        } else {
            0.0
        };
        (u - 0.5).abs() > self.reward.outer_band
    }
}

impl Environment for Hypergrid {
    type State = HypergridState;

    fn initial_state(&self) -> HypergridState {
        HypergridState {
            coords: vec![0; self.dims],
        }
    }

    fn action_count(&self) -> usize {
        self.dims + 1
    }

    fn action_mask(&self, s: &HypergridState) -> Vec<bool> {
        let mut mask: Vec<bool> = s.coords.iter().map(|&c| (c as usize) + 1 < self.side).collect();
        mask.push(true);
        mask
    }

    fn apply(&self, s: &HypergridState, a: ActionId) -> Result<HypergridState, EnvError> {
        if a >= self.dims || s.coords[a] as usize + 1 >= self.side {
            return Err(EnvError::MaskedTransition {
                state: self.key(s),
                action: a,
            });
        }
        let mut next = s.clone();
        next.coords[a] += 1;
        Ok(next)
    }

    fn parents(&self, s: &HypergridState) -> Vec<(HypergridState, ActionId)> {
        (0..self.dims)
            .filter(|&i| s.coords[i] > 0)
            .map(|i| {
                let mut p = s.clone();
                p.coords[i] -= 1;
                (p, i)
            })
            .collect()
    }

    fn feature_dim(&self) -> usize {
        self.dims * self.side
    }

    fn write_features(&self, s: &HypergridState, out: &mut [f64]) {
        out.fill(0.0);
        for (i, &c) in s.coords.iter().enumerate() {
            out[i * self.side + c as usize] = 1.0;
        }
    }

    fn log_reward(&self, s: &HypergridState) -> f64 {
        self.reward.reward(&s.coords, self.side).ln()
    }

    fn is_terminal_allowed(&self, _s: &HypergridState) -> bool {
        true
    }

    fn key(&self, s: &HypergridState) -> StateKey {
        StateKey(s.coords.clone())
    }

    /// A mode is a corner block where every coordinate lies in the outer
    /// band; its id records which side of the grid each coordinate is on.
    fn mode_of(&self, s: &HypergridState) -> Option<usize> {
        if !s.coords.iter().all(|&c| self.in_outer_band(c)) {
            return None;
        }
        let half = (self.side as f64 - 1.0) / 2.0;
        Some(
            s.coords
                .iter()
                .enumerate()
                .map(|(i, &c)| if c as f64 > half { 1 << i } else { 0 })
                .sum(),
        )
    }

    fn mode_count(&self) -> usize {
        1 << self.dims
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::enumerate_states;

    fn grid(d: usize, h: usize) -> Hypergrid {
        Hypergrid::new(d, h, HypergridReward::default())
    }

    #[test]
    fn state_counts_are_h_to_the_d() {
        assert_eq!(enumerate_states(&grid(2, 2), 100).unwrap().len(), 4);
        assert_eq!(enumerate_states(&grid(2, 8), 100).unwrap().len(), 64);
        assert_eq!(enumerate_states(&grid(3, 4), 100).unwrap().len(), 64);
    }

    #[test]
    fn center_and_corner_rewards() {
        let r = HypergridReward::default();
        let env = grid(2, 8);
        for c in [[3u8, 3], [3, 4], [4, 4]] {
            assert_eq!(r.reward(&c, 8), r.r0);
            assert!((env.log_reward(&env.state(&c)).exp() - r.r0).abs() < 1e-15);
        }
        // Corner: |0/7 - 1/2| = 0.5 exceeds both bands.
        let corner = env.log_reward(&env.state(&[0, 0])).exp();
        assert!((corner - (r.r0 + r.r1 + r.r2)).abs() < 1e-12);
    }

    #[test]
    fn default_reward_has_four_modes_on_8x8() {
        let env = grid(2, 8);
        let peak = HypergridReward::default();
        let peak = peak.r0 + peak.r1 + peak.r2;
        let mut peaks = 0;
        let mut mode_ids = std::collections::BTreeSet::new();
        for x in 0..8u8 {
            for y in 0..8u8 {
                let s = env.state(&[x, y]);
                if (env.log_reward(&s).exp() - peak).abs() < 1e-12 {
                    peaks += 1;
                }
                if let Some(m) = env.mode_of(&s) {
                    mode_ids.insert(m);
                }
            }
        }
        assert_eq!(peaks, 4);
        assert_eq!(mode_ids.len(), 4);
        assert_eq!(env.mode_count(), 4);
    }

    #[test]
    fn interior_cells_have_two_parents() {
        let env = grid(2, 8);
        for x in 1..8u8 {
            for y in 1..8u8 {
                assert_eq!(env.parents(&env.state(&[x, y])).len(), 2);
            }
        }
        assert!(env.parents(&env.initial_state()).is_empty());
    }

    #[test]
    fn edge_cells_mask_increments() {
        let env = grid(2, 3);
        assert_eq!(env.action_mask(&env.state(&[2, 1])), vec![false, true, true]);
        assert!(env.apply(&env.state(&[2, 1]), 0).is_err());
    }
}
