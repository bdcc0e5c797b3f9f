//! Binary-indexed prefix-sum tree over real-valued node weights.
//!
//! Supports point updates and a logarithmic-time search for the first index
//! whose prefix sum strictly exceeds a target value, which is exactly the
//! operation needed to sample a parent proportionally to attachment weights.
//! Zero-weight (saturated) entries can never be returned by the search.

#[derive(Debug, Clone)]
pub struct FenwickTree {
    // One-based internal layout; tree[i] covers a block of size lsb(i).
    tree: Vec<f64>,
    len: usize,
    mask: usize,
}

impl FenwickTree {
    /// An empty tree able to hold up to `capacity` values.
    pub fn with_capacity(capacity: usize) -> Self {
        let mut mask = 1usize;
        while mask * 2 <= capacity.max(1) {
            mask *= 2;
        }
        Self {
            tree: vec![0.0; capacity + 1],
            len: 0,
            mask,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Appends a value at index `len`, growing the backing storage if needed.
    pub fn push(&mut self, value: f64) {
        let i = self.len + 1; // 1-based slot being activated
        if i >= self.tree.len() {
            self.tree.resize((i + 1).next_power_of_two(), 0.0);
        }
        // A freshly activated slot covers the block (i - lsb(i), i]; seed it
        // with the block's current content so later prefix queries see every
        // earlier push and update.
        let lsb = i & i.wrapping_neg();
        self.tree[i] = value + self.block_sum(i - lsb, i - 1);
        self.len = i;
        while self.mask * 2 <= self.len {
            self.mask *= 2;
        }
    }

    // Sum of values at 1-based positions in (from, to]; `from` must lie on
    // the descent chain of `to`, which holds for block boundaries.
    fn block_sum(&self, from: usize, to: usize) -> f64 {
        let mut s = 0.0;
        let mut j = to;
        while j > from {
            s += self.tree[j];
            j -= j & j.wrapping_neg();
        }
        s
    }

    /// Adds `delta` to the value at `index`.
    pub fn add(&mut self, index: usize, delta: f64) {
        debug_assert!(index < self.len);
        let mut i = index + 1;
        while i <= self.len {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of the first `count` values.
    pub fn prefix_sum(&self, count: usize) -> f64 {
        debug_assert!(count <= self.len);
        let mut s = 0.0;
        let mut i = count;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    /// Sum of all values.
    pub fn total(&self) -> f64 {
        self.prefix_sum(self.len)
    }

    /// First index `i` with `prefix_sum(i + 1) > target`, i.e. the entry into
    /// whose weight interval `target` falls. Requires `0 <= target < total()`.
    /// Entries with weight zero are skipped by construction.
    pub fn search(&self, target: f64) -> usize {
        debug_assert!(target >= 0.0);
        let mut pos = 0usize;
        let mut rem = target;
        let mut step = self.mask;
        while step > 0 {
            let next = pos + step;
            if next <= self.len && self.tree[next] <= rem {
                rem -= self.tree[next];
                pos = next;
            }
            step /= 2;
        }
        debug_assert!(pos < self.len, "search target at or above the total weight");
        pos
    }
}
