use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

/// One round of a bandit run. `t` counts rounds from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub action: usize,
    pub regret: f64,
    pub cum_regret: f64,
    pub epoch: usize,
    /// Policy switches so far.
    pub switches: usize,
}

/// The CSV row handed to the plotting scripts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub regret: f64,
    pub cum_regret: f64,
    pub epoch: usize,
    pub switches: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub rounds: Vec<RoundRecord>,
}

impl RegretTrace {
    pub fn with_capacity(n: usize) -> Self {
        Self { rounds: Vec::with_capacity(n) }
    }

    pub fn push(&mut self, action: usize, regret: f64, epoch: usize, switches: usize) {
        debug_assert!(regret >= -1e-12, "instantaneous regret {regret} is negative");
        let cum_regret = self.cum_regret() + regret.max(0.0);
        self.rounds.push(RoundRecord { t: self.rounds.len() + 1, action, regret, cum_regret, epoch, switches });
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn cum_regret(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.cum_regret)
    }

    /// Cumulative regret after the first `t` rounds.
    pub fn cum_regret_at(&self, t: usize) -> f64 {
        match t {
            0 => 0.0,
            _ => self.rounds[t.min(self.rounds.len()) - 1].cum_regret,
        }
    }

    pub fn switches(&self) -> usize {
        self.rounds.last().map_or(0, |r| r.switches)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rounds {
            out.serialize(TraceRow {
                t: r.t,
                regret: r.regret,
                cum_regret: r.cum_regret,
                epoch: r.epoch,
                switches: r.switches,
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> csv::Result<Vec<TraceRow>> {
        csv::Reader::from_reader(r).deserialize().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_the_fixed_header_and_round_trips() {
        let mut tr = RegretTrace::default();
        tr.push(0, 0.25, 0, 0);
        tr.push(1, 0.0, 1, 1);
        tr.push(1, 0.5, 1, 1);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,regret,cum_regret,epoch,switches");
        let rows = RegretTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].cum_regret, 0.75);
        assert_eq!(rows[2].t, 3);
        assert_eq!(tr.cum_regret_at(2), 0.25);
        assert_eq!(tr.cum_regret_at(99), 0.75);
    }
}
