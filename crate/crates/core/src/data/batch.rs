use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Yields index batches; each epoch is a seeded permutation of all samples,
/// determined only by `(seed, epoch)`. The last batch of an epoch may be short.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchIterator {
    len: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    cursor: usize,
    order: Vec<usize>,
}

impl BatchIterator {
    pub fn new(len: usize, batch_size: usize, seed: u64) -> Self {
        Self::resume(len, batch_size, seed, 0, 0)
    }

    /// Restarts at a given epoch and position within it.
    pub fn resume(len: usize, batch_size: usize, seed: u64, epoch: u64, cursor: usize) -> Self {
        let order = Self::permutation(len, seed, epoch);
        Self { len, batch_size: batch_size.max(1), seed, epoch, cursor: cursor.min(len), order }
    }

    pub fn permutation(len: usize, seed: u64, epoch: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        order
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Fraction of epochs completed so far.
    pub fn progress(&self) -> f64 {
        self.epoch as f64 + self.cursor as f64 / self.len.max(1) as f64
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor >= self.len {
            self.epoch += 1;
            self.cursor = 0;
            self.order = Self::permutation(self.len, self.seed, self.epoch);
        }
        let end = (self.cursor + self.batch_size).min(self.len);
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }

    /// Number of batches in one epoch.
    pub fn batches_per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }
}
