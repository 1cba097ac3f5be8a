use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trigger {
    None,
    Symbolic,
    Reinit,
}

/// Watches per-generation branch-edge totals.
///
/// Each window holds a baseline plus the `n` most recent totals. The
/// symbolic trigger fires when growth relative to the baseline is below
/// `sym_rel_growth`; the reinit trigger fires when there was no growth at all.
#[derive(Debug, Clone)]
pub struct StagnationDetector {
    pub sym_window: usize,
    pub sym_rel_growth: f64,
    pub reinit_window: usize,
    sym: VecDeque<u64>,
    reinit: VecDeque<u64>,
}

impl Default for StagnationDetector {
    fn default() -> Self {
        Self::new(5, 0.01, 10)
    }
}

fn slide(w: &mut VecDeque<u64>, n: usize) {
    while w.len() > n + 1 {
        w.pop_front();
    }
}

impl StagnationDetector {
    pub fn new(sym_window: usize, sym_rel_growth: f64, reinit_window: usize) -> Self {
        Self {
            sym_window,
            sym_rel_growth,
            reinit_window,
            sym: VecDeque::new(),
            reinit: VecDeque::new(),
        }
    }

    pub fn check(&mut self, branch_total: u64) -> Trigger {
        self.sym.push_back(branch_total);
        self.reinit.push_back(branch_total);
        slide(&mut self.sym, self.sym_window);
        slide(&mut self.reinit, self.reinit_window);

        let reinit = self.reinit.len() == self.reinit_window + 1 && branch_total <= self.reinit[0];
        if reinit {
            self.reinit = VecDeque::from([branch_total]);
            self.sym = VecDeque::from([branch_total]);
            return Trigger::Reinit;
        }
        let symbolic = self.sym.len() == self.sym_window + 1 && {
            let first = self.sym[0];
            let growth = branch_total.saturating_sub(first);
            if first == 0 {
                growth == 0
            } else {
                (growth as f64) / (first as f64) < self.sym_rel_growth
            }
        };
        if symbolic {
            self.sym = VecDeque::from([branch_total]);
            return Trigger::Symbolic;
        }
        Trigger::None
    }

    /// Forget history; the next total becomes the new baseline.
    pub fn reset(&mut self) {
        self.sym.clear();
        self.reinit.clear();
    }
}
