//! Ring-buffer experience replay with optional per-head bootstrap masks.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::objectives::{Batch, Transition};

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    heads: usize,
    mask_prob: f64,
    items: Vec<Transition>,
    masks: Vec<Vec<bool>>,
    /// Slot overwritten by the next push once full.
    next: usize,
}

impl ReplayBuffer {
    /// A buffer without bootstrap masks.
    pub fn new(capacity: usize) -> Result<Self> {
        Self::with_heads(capacity, 1, 1.0)
    }

    /// A buffer drawing a mask over `heads` heads at push time, each head
    /// included independently with probability `mask_prob`.
    pub fn with_heads(capacity: usize, heads: usize, mask_prob: f64) -> Result<Self> {
        if capacity == 0 || heads == 0 {
            return Err(Error::InvalidArgument("replay capacity and head count must be positive".into()));
        }
        if !(0.0..=1.0).contains(&mask_prob) {
            return Err(Error::InvalidArgument(format!("mask probability {mask_prob} outside [0, 1]")));
        }
        Ok(Self {
            capacity,
            heads,
            mask_prob,
            items: Vec::new(),
            masks: Vec::new(),
            next: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Transition, &[bool])> {
        self.items.iter().zip(self.masks.iter().map(Vec::as_slice))
    }

    /// Appends `t`, evicting the oldest transition when full.
    pub fn push<R: Rng + ?Sized>(&mut self, t: Transition, rng: &mut R) {
        let mask: Vec<bool> = if self.heads == 1 {
            vec![true]
        } else {
            (0..self.heads).map(|_| self.mask_prob >= 1.0 || rng.random_bool(self.mask_prob)).collect()
        };
        if self.items.len() < self.capacity {
            self.items.push(t);
            self.masks.push(mask);
        } else {
            self.items[self.next] = t;
            self.masks[self.next] = mask;
            self.next = (self.next + 1) % self.capacity;
        }
    }

    /// `n` distinct transitions drawn uniformly, in random order.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        if n == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if self.items.len() < n {
            return Err(Error::NotReady {
                have: self.items.len(),
                need: n,
            });
        }
        let idx = index::sample(rng, self.items.len(), n);
        let transitions = idx.iter().map(|i| self.items[i].clone()).collect();
        let masks = (self.heads > 1).then(|| idx.iter().map(|i| self.masks[i].clone()).collect());
        Batch::with_masks(transitions, masks)
    }
}
