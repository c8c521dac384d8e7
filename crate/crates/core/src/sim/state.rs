use std::collections::VecDeque;

use crate::market::AgentId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvailableAgent {
    pub id: AgentId,
    pub arrival: f64,
    pub departure: f64,
}

/// Live market: FIFO queues of available agents per type plus per-type
/// presence counts. Presence includes matched agents whose simulated
/// departure has not happened yet.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    pub clock: f64,
    available: Vec<VecDeque<AvailableAgent>>,
    present: Vec<usize>,
}

impl MarketState {
    pub fn new(num_types: usize) -> Self {
        Self {
            clock: 0.0,
            available: vec![VecDeque::new(); num_types],
            present: vec![0; num_types],
        }
    }

    pub fn num_types(&self) -> usize {
        self.present.len()
    }

    pub fn available(&self, x: usize) -> &VecDeque<AvailableAgent> {
        &self.available[x]
    }

    pub fn num_available(&self, x: usize) -> usize {
        self.available[x].len()
    }

    pub fn num_present(&self, x: usize) -> usize {
        self.present[x]
    }

    pub fn is_present(&self, x: usize) -> bool {
        self.present[x] > 0
    }

    /// Present but already matched.
    pub fn num_shadow(&self, x: usize) -> usize {
        self.present[x] - self.available[x].len()
    }

    pub fn oldest_available(&self, x: usize) -> Option<&AvailableAgent> {
        self.available[x].front()
    }

    pub fn total_available(&self) -> usize {
        self.available.iter().map(VecDeque::len).sum()
    }

    /// All available agents, grouped by type and oldest first within a type.
    pub fn available_agents(&self) -> impl Iterator<Item = &AvailableAgent> {
        self.available.iter().flatten()
    }

    /// An unmatched patient agent joins the market.
    pub fn add_available(&mut self, agent: AvailableAgent) {
        let x = agent.id.type_id;
        self.present[x] += 1;
        self.available[x].push_back(agent);
    }

    /// An agent matched on arrival stays present until its simulated departure.
    pub fn add_shadow(&mut self, x: usize) {
        self.present[x] += 1;
    }

    /// Marks an available agent as matched; it remains present.
    pub fn take_available(&mut self, id: AgentId) -> Option<AvailableAgent> {
        let q = &mut self.available[id.type_id];
        let pos = q.iter().position(|a| a.id == id)?;
        q.remove(pos)
    }

    /// Removes a present agent. Returns whether it had been matched.
    pub fn depart(&mut self, id: AgentId) -> bool {
        let x = id.type_id;
        debug_assert!(self.present[x] > 0, "departure of absent agent {id}");
        self.present[x] -= 1;
        self.take_available(id).is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(t: usize, s: u64, a: f64, d: f64) -> AvailableAgent {
        AvailableAgent {
            id: AgentId::new(t, s),
            arrival: a,
            departure: d,
        }
    }

    #[test]
    fn presence_tracks_shadows() {
        let mut st = MarketState::new(2);
        st.add_available(agent(0, 0, 0.0, 5.0));
        st.add_available(agent(0, 1, 1.0, 2.0));
        assert_eq!(st.oldest_available(0).unwrap().id.serial, 0);
        assert!(st.take_available(AgentId::new(0, 0)).is_some());
        assert_eq!(st.num_present(0), 2);
        assert_eq!(st.num_shadow(0), 1);
        assert!(!st.depart(AgentId::new(0, 1)));
        assert!(st.depart(AgentId::new(0, 0)));
        assert_eq!(st.num_present(0), 0);
        assert!(!st.is_present(1));
    }
}
