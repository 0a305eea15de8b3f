use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use crate::{Error, Result};

pub const DEFAULT_REPLAY_CAPACITY: usize = 100_000;

/// FIFO ring buffers, one partition per agent, each holding at most `capacity` items.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    parts: Vec<VecDeque<T>>,
    capacity: usize,
}

/// Sampled items with the partition each came from.
#[derive(Debug)]
pub struct Batch<'a, T> {
    pub items: Vec<(usize, &'a T)>,
    /// Fewer items were available than requested.
    pub partial: bool,
}

impl<'a, T> Batch<'a, T> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl<T> ReplayBuffer<T> {
    pub fn new(partitions: usize, capacity: usize) -> Result<Self> {
        if partitions == 0 || capacity == 0 {
            return Err(Error::config("replay buffers need at least one partition and positive capacity"));
        }
        Ok(Self {
            parts: (0..partitions).map(|_| VecDeque::new()).collect(),
            capacity,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn partitions(&self) -> usize {
        self.parts.len()
    }

    pub fn len(&self) -> usize {
        self.parts.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.iter().all(VecDeque::is_empty)
    }

    pub fn partition_len(&self, part: usize) -> usize {
        self.parts[part].len()
    }

    pub fn partition(&self, part: usize) -> &VecDeque<T> {
        &self.parts[part]
    }

    pub fn push(&mut self, part: usize, item: T) -> Result<()> {
        let capacity = self.capacity;
        let queue = self
            .parts
            .get_mut(part)
            .ok_or_else(|| Error::usage(format!("replay partition {part} does not exist")))?;
        if queue.len() == capacity {
            queue.pop_front();
        }
        queue.push_back(item);
        Ok(())
    }

    /// Uniform sampling without replacement. `per_partition` draws
    /// `floor(count / partitions)` from each partition; otherwise `count`
    /// items are drawn from the union. Empty buffers yield [`Error::Retry`].
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, per_partition: bool, rng: &mut R) -> Result<Batch<'_, T>> {
        if self.is_empty() {
            return Err(Error::Retry("replay buffer is empty".into()));
        }
        let mut items = Vec::with_capacity(count);
        let mut partial = false;
        if per_partition {
            let each = count / self.parts.len();
            for (p, queue) in self.parts.iter().enumerate() {
                let take = each.min(queue.len());
                partial |= take < each;
                for k in index::sample(rng, queue.len(), take) {
                    items.push((p, &queue[k]));
                }
            }
        } else {
            let total = self.len();
            let take = count.min(total);
            partial = take < count;
            for flat in index::sample(rng, total, take) {
                items.push(self.locate(flat));
            }
        }
        Ok(Batch { items, partial })
    }

    /// Uniform sampling without replacement from one partition only.
    pub fn sample_partition<R: Rng + ?Sized>(&self, part: usize, count: usize, rng: &mut R) -> Result<Batch<'_, T>> {
        let queue = self
            .parts
            .get(part)
            .ok_or_else(|| Error::usage(format!("replay partition {part} does not exist")))?;
        if queue.is_empty() {
            return Err(Error::Retry(format!("replay partition {part} is empty")));
        }
        let take = count.min(queue.len());
        let items = index::sample(rng, queue.len(), take).into_iter().map(|k| (part, &queue[k])).collect();
        Ok(Batch { items, partial: take < count })
    }

    fn locate(&self, mut flat: usize) -> (usize, &T) {
        for (p, queue) in self.parts.iter().enumerate() {
            if flat < queue.len() {
                return (p, &queue[flat]);
            }
            flat -= queue.len();
        }
        unreachable!("flat index within total length")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn oldest_item_is_evicted() {
        let mut b = ReplayBuffer::new(1, 3).unwrap();
        for i in 0..4 {
            b.push(0, i).unwrap();
        }
        assert_eq!(b.partition(0).iter().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn per_partition_sampling_splits_evenly() {
        let mut b = ReplayBuffer::new(2, 100).unwrap();
        for i in 0..50 {
            b.push(0, i).unwrap();
            b.push(1, 100 + i).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = b.sample(32, true, &mut rng).unwrap();
        assert_eq!(batch.items.iter().filter(|(p, _)| *p == 0).count(), 16);
        assert_eq!(batch.items.iter().filter(|(p, _)| *p == 1).count(), 16);
        assert!(!batch.partial);
        assert!(batch.items.iter().all(|(p, v)| (**v >= 100) == (*p == 1)));
    }

    #[test]
    fn oversized_requests_return_everything_flagged() {
        let mut b = ReplayBuffer::new(1, 10).unwrap();
        for i in 0..5 {
            b.push(0, i).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = b.sample(32, false, &mut rng).unwrap();
        assert!(batch.partial);
        let mut got: Vec<i32> = batch.items.iter().map(|(_, v)| **v).collect();
        got.sort();
        assert_eq!(got, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn empty_buffer_asks_for_retry() {
        let b: ReplayBuffer<u8> = ReplayBuffer::new(2, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(b.sample(4, false, &mut rng), Err(Error::Retry(_))));
    }

    #[test]
    fn no_duplicates_within_a_call() {
        let mut b = ReplayBuffer::new(3, 20).unwrap();
        for i in 0..60 {
            b.push(i % 3, i).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mut got: Vec<usize> = b.sample(30, false, &mut rng).unwrap().items.iter().map(|(_, v)| **v).collect();
            got.sort();
            got.dedup();
            assert_eq!(got.len(), 30);
        }
    }

    #[test]
    fn sampling_frequencies_are_uniform() {
        let mut b = ReplayBuffer::new(2, 1000).unwrap();
        for i in 0..100 {
            b.push(i % 2, i).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 100];
        let draws = 100_000;
        for _ in 0..draws {
            let batch = b.sample(1, false, &mut rng).unwrap();
            counts[*batch.items[0].1] += 1;
        }
        let p = 0.01;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 5.0 * sd, "{c} vs {mean} +- {sd}");
        }
    }
}
