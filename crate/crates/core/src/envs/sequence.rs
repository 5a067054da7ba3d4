//! Left-to-right token sequence builder.

use serde::{Deserialize, Serialize};

use crate::env::{ActionId, EnvError, Environment, StateKey};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SequenceState {
    pub tokens: Vec<u8>,
}

/// Synthetic landscape made of motif bonuses.
///
/// `f(x) = base + Σ_m weight_m · (best_match_m(x) / |m|)^sharpness`, where
/// `best_match_m` is the largest number of positions agreeing with motif `m`
/// over all windows of `x`. A sequence is in mode `m` iff it contains `m`
/// verbatim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotifLandscape {
    pub motifs: Vec<Vec<u8>>,
    pub weights: Vec<f64>,
    pub base: f64,
    pub sharpness: f64,
}

impl MotifLandscape {
    /// Four length-six motifs over a 4-letter vocabulary.
    pub fn reference() -> Self {
        Self {
            motifs: vec![
                vec![0, 1, 2, 3, 0, 1],
                vec![3, 3, 2, 2, 1, 1],
                vec![2, 0, 2, 0, 3, 1],
                vec![1, 3, 0, 2, 3, 0],
            ],
            weights: vec![1.0, 1.0, 1.0, 1.0],
            base: 0.01,
            sharpness: 3.0,
        }
    }

    pub fn best_match(motif: &[u8], tokens: &[u8]) -> usize {
        if tokens.len() < motif.len() {
            // Slide the shorter sequence across the motif instead.
            return (0..=motif.len() - tokens.len())
                .map(|off| tokens.iter().zip(&motif[off..]).filter(|(a, b)| a == b).count())
                .max()
                .unwrap_or(0);
        }
        (0..=tokens.len() - motif.len())
            .map(|off| motif.iter().zip(&tokens[off..]).filter(|(a, b)| a == b).count())
            .max()
            .unwrap_or(0)
    }

    pub fn value(&self, tokens: &[u8]) -> f64 {
        self.base
            + self
                .motifs
                .iter()
                .zip(&self.weights)
                .map(|(m, w)| {
                    let frac = Self::best_match(m, tokens) as f64 / m.len() as f64;
                    w * frac.powf(self.sharpness)
                })
                .sum::<f64>()
    }

    pub fn mode_of(&self, tokens: &[u8]) -> Option<usize> {
        self.motifs
            .iter()
            .position(|m| Self::best_match(m, tokens) == m.len())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SequenceReward {
    /// Every sequence gets reward 1.
    Uniform,
    Motifs(MotifLandscape),
}

#[derive(Clone, Debug)]
pub struct SequenceEnv {
    vocab: usize,
    max_len: usize,
    min_len: usize,
    reward: SequenceReward,
}

impl SequenceEnv {
    /// Stop is valid at any length in `min_len..=max_len`.
    pub fn new(vocab: usize, max_len: usize, min_len: usize, reward: SequenceReward) -> Self {
        assert!(vocab >= 1 && vocab <= 256 && min_len <= max_len && max_len <= 255);
        Self {
            vocab,
            max_len,
            min_len,
            reward,
        }
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn min_len(&self) -> usize {
        self.min_len
    }

    pub fn reward_spec(&self) -> &SequenceReward {
        &self.reward
    }

    pub fn value(&self, tokens: &[u8]) -> f64 {
        match &self.reward {
            SequenceReward::Uniform => 1.0,
            SequenceReward::Motifs(m) => m.value(tokens),
        }
    }
}

impl Environment for SequenceEnv {
    type State = SequenceState;

    fn initial_state(&self) -> SequenceState {
        SequenceState { tokens: Vec::new() }
    }

    fn action_count(&self) -> usize {
        self.vocab + 1
    }

    fn action_mask(&self, s: &SequenceState) -> Vec<bool> {
        let can_append = s.tokens.len() < self.max_len;
        let mut mask = vec![can_append; self.vocab];
        mask.push(self.is_terminal_allowed(s));
        mask
    }

    fn apply(&self, s: &SequenceState, a: ActionId) -> Result<SequenceState, EnvError> {
        if a >= self.vocab || s.tokens.len() >= self.max_len {
            return Err(EnvError::MaskedTransition {
                state: self.key(s),
                action: a,
            });
        }
        let mut next = s.clone();
        next.tokens.push(a as u8);
        Ok(next)
    }

    fn parents(&self, s: &SequenceState) -> Vec<(SequenceState, ActionId)> {
        match s.tokens.split_last() {
            Some((&last, rest)) => vec![(
                SequenceState {
                    tokens: rest.to_vec(),
                },
                last as ActionId,
            )],
            None => Vec::new(),
        }
    }

    fn feature_dim(&self) -> usize {
        (self.max_len + 1) + self.max_len * self.vocab
    }

    fn write_features(&self, s: &SequenceState, out: &mut [f64]) {
        out.fill(0.0);
        out[s.tokens.len()] = 1.0;
        let base = self.max_len + 1;
        for (i, &t) in s.tokens.iter().enumerate() {
            out[base + i * self.vocab + t as usize] = 1.0;
        }
    }

    fn log_reward(&self, s: &SequenceState) -> f64 {
        self.value(&s.tokens).ln()
    }

    fn is_terminal_allowed(&self, s: &SequenceState) -> bool {
        s.tokens.len() >= self.min_len
    }

    fn key(&self, s: &SequenceState) -> StateKey {
        let mut bytes = Vec::with_capacity(s.tokens.len() + 1);
        bytes.push(s.tokens.len() as u8);
        bytes.extend_from_slice(&s.tokens);
        StateKey(bytes)
    }

    fn mode_of(&self, s: &SequenceState) -> Option<usize> {
        match &self.reward {
            SequenceReward::Uniform => None,
            SequenceReward::Motifs(m) => m.mode_of(&s.tokens),
        }
    }

    fn mode_count(&self) -> usize {
        match &self.reward {
            SequenceReward::Uniform => 0,
            SequenceReward::Motifs(m) => m.motifs.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::enumerate_states;

    #[test]
    fn terminal_count_is_geometric_sum() {
        let env = SequenceEnv::new(4, 3, 1, SequenceReward::Uniform);
        let g = enumerate_states(&env, 1000).unwrap();
        assert_eq!(g.len(), 1 + 4 + 16 + 64);
        assert_eq!(g.terminal_indices().len(), 4 + 16 + 64);
    }

    #[test]
    fn stop_is_forced_at_max_length() {
        let env = SequenceEnv::new(2, 2, 1, SequenceReward::Uniform);
        let full = SequenceState { tokens: vec![0, 1] };
        assert_eq!(env.action_mask(&full), vec![false, false, true]);
        assert_eq!(env.action_mask(&env.initial_state()), vec![true, true, false]);
    }

    #[test]
    fn motif_matching_and_modes() {
        let land = MotifLandscape::reference();
        let hit = [3u8, 0, 1, 2, 3, 0, 1, 2];
        assert_eq!(land.mode_of(&hit), Some(0));
        assert_eq!(MotifLandscape::best_match(&land.motifs[0], &hit), 6);
        let miss = [0u8; 8];
        assert_eq!(land.mode_of(&miss), None);
        assert!(land.value(&hit) > land.value(&miss));
        assert!(land.value(&hit) >= 1.0);
    }
}
