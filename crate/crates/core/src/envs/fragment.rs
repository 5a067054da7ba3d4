//! Fragment-composition builder over a synthetic library.
//!
//! Each fragment has a number of attachment slots. The first fragment is
//! placed freely; every later fragment bonds to one open slot of the
//! structure and spends one of its own slots on that bond, so the open-slot
//! count after `n ≥ 1` fragments is `Σ slots − 2(n − 1)`. A fragment can be
//! added only while an open slot remains. States are fragment multisets.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::env::{ActionId, EnvError, Environment, StateKey};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fragment {
    pub slots: u8,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FragmentState {
    /// Count of each library fragment.
    pub counts: Vec<u8>,
}

impl FragmentState {
    pub fn size(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }
}

#[derive(Clone, Debug)]
pub struct FragmentEnv {
    library: Vec<Fragment>,
    max_fragments: usize,
    target: f64,
    width: f64,
    floor: f64,
}

impl FragmentEnv {
    /// Reward is `floor + exp(−(Σ values − target)² / (2 width²))`.
    pub fn new(library: Vec<Fragment>, max_fragments: usize, target: f64, width: f64, floor: f64) -> Self {
        assert!(!library.is_empty() && library.len() <= 255 && max_fragments <= 255);
        Self {
            library,
            max_fragments,
            target,
            width,
            floor,
        }
    }

    /// Five fragments with one to three slots.
    pub fn reference_library() -> Vec<Fragment> {
        vec![
            Fragment { slots: 1, value: 0.5 },
            Fragment { slots: 2, value: 1.0 },
            Fragment { slots: 3, value: 1.5 },
            Fragment { slots: 1, value: 2.0 },
            Fragment { slots: 2, value: -0.5 },
        ]
    }

    pub fn library(&self) -> &[Fragment] {
        &self.library
    }

    pub fn max_fragments(&self) -> usize {
        self.max_fragments
    }

    pub fn open_slots(&self, s: &FragmentState) -> i64 {
        let n = s.size() as i64;
        if n == 0 {
            return 0;
        }
        let total: i64 = s
            .counts
            .iter()
            .zip(&self.library)
            .map(|(&c, f)| c as i64 * f.slots as i64)
            .sum();
        total - 2 * (n - 1)
    }

    fn can_add(&self, s: &FragmentState, f: usize) -> bool {
        if s.size() >= self.max_fragments {
            return false;
        }
        s.size() == 0 || (self.open_slots(s) > 0 && self.library[f].slots >= 1)
    }

    /// Whether some insertion order builds `s` from the empty state.
    fn reachable(&self, s: &FragmentState, memo: &mut HashMap<FragmentState, bool>) -> bool {
        if s.size() == 0 {
            return true;
        }
        if let Some(&r) = memo.get(s) {
            return r;
        }
        let mut ok = false;
        for f in 0..self.library.len() {
            if s.counts[f] == 0 {
                continue;
            }
            let mut p = s.clone();
            p.counts[f] -= 1;
            if self.can_add(&p, f) && self.reachable(&p, memo) {
                ok = true;
                break;
            }
        }
        memo.insert(s.clone(), ok);
        ok
    }

    pub fn value_sum(&self, s: &FragmentState) -> f64 {
        s.counts
            .iter()
            .zip(&self.library)
            .map(|(&c, f)| c as f64 * f.value)
            .sum()
    }
}

impl Environment for FragmentEnv {
    type State = FragmentState;

    fn initial_state(&self) -> FragmentState {
        FragmentState {
            counts: vec![0; self.library.len()],
        }
    }

    fn action_count(&self) -> usize {
        self.library.len() + 1
    }

    fn action_mask(&self, s: &FragmentState) -> Vec<bool> {
        let mut mask: Vec<bool> = (0..self.library.len()).map(|f| self.can_add(s, f)).collect();
        mask.push(self.is_terminal_allowed(s));
        mask
    }

    fn apply(&self, s: &FragmentState, a: ActionId) -> Result<FragmentState, EnvError> {
        if a >= self.library.len() || !self.can_add(s, a) {
            return Err(EnvError::MaskedTransition {
                state: self.key(s),
                action: a,
            });
        }
        let mut next = s.clone();
        next.counts[a] += 1;
        Ok(next)
    }

    fn parents(&self, s: &FragmentState) -> Vec<(FragmentState, ActionId)> {
        let mut memo = HashMap::new();
        (0..self.library.len())
            .filter(|&f| s.counts[f] > 0)
            .filter_map(|f| {
                let mut p = s.clone();
                p.counts[f] -= 1;
                (self.can_add(&p, f) && self.reachable(&p, &mut memo)).then_some((p, f))
            })
            .collect()
    }

    fn feature_dim(&self) -> usize {
        self.library.len() + 1
    }

    fn write_features(&self, s: &FragmentState, out: &mut [f64]) {
        let scale = self.max_fragments.max(1) as f64;
        for (o, &c) in out.iter_mut().zip(&s.counts) {
            *o = c as f64 / scale;
        }
        out[self.library.len()] = self.open_slots(s) as f64 / scale;
    }

    fn log_reward(&self, s: &FragmentState) -> f64 {
        let z = (self.value_sum(s) - self.target) / self.width;
        (self.floor + (-0.5 * z * z).exp()).ln()
    }

    fn is_terminal_allowed(&self, s: &FragmentState) -> bool {
        s.size() >= 1
    }

    fn key(&self, s: &FragmentState) -> StateKey {
        StateKey(s.counts.clone())
    }
}
