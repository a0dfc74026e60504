use rand::Rng;

/// Bounded FIFO of `(obs, action, reward, next_obs, terminal)` transitions with uniform
/// sampling. Stored flat; the oldest transition is overwritten once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    terminals: Vec<bool>,
    len: usize,
    head: usize,
}

/// A sampled minibatch, row-major.
#[derive(Debug, Clone, Default)]
pub struct Minibatch {
    pub obs: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub terminals: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize) -> Self {
        assert!(capacity > 0 && obs_dim > 0);
        Self {
            capacity,
            obs_dim,
            obs: vec![0.0; capacity * obs_dim],
            next_obs: vec![0.0; capacity * obs_dim],
            actions: vec![0; capacity],
            rewards: vec![0.0; capacity],
            terminals: vec![false; capacity],
            len: 0,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, obs: &[f64], action: usize, reward: f64, next_obs: &[f64], terminal: bool) {
        let d = self.obs_dim;
        assert_eq!(obs.len(), d);
        assert_eq!(next_obs.len(), d);
        let i = self.head;
        self.obs[i * d..(i + 1) * d].copy_from_slice(obs);
        self.next_obs[i * d..(i + 1) * d].copy_from_slice(next_obs);
        self.actions[i] = action;
        self.rewards[i] = reward;
        self.terminals[i] = terminal;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Slot index of the `k`-th oldest stored transition.
    pub fn slot(&self, k: usize) -> usize {
        (self.head + self.capacity - self.len + k) % self.capacity
    }

    pub fn action_at(&self, slot: usize) -> usize {
        self.actions[slot]
    }

    /// Uniform sampling with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        assert!(self.len > 0, "sampling from an empty replay buffer");
        (0..batch).map(|_| self.slot(rng.random_range(0..self.len))).collect()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R, out: &mut Minibatch) {
        let idx = self.sample_indices(batch, rng);
        let d = self.obs_dim;
        out.obs.clear();
        out.next_obs.clear();
        out.actions.clear();
        out.rewards.clear();
        out.terminals.clear();
        for i in idx {
            out.obs.extend_from_slice(&self.obs[i * d..(i + 1) * d]);
            out.next_obs.extend_from_slice(&self.next_obs[i * d..(i + 1) * d]);
            out.actions.push(self.actions[i]);
            out.rewards.push(self.rewards[i]);
            out.terminals.push(self.terminals[i]);
        }
    }
}
