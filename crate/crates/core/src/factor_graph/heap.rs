/// Addressable binary min-heap over the fixed index set `0..n`.
///
/// Every index always has exactly one key; updating a key moves the entry in
/// `O(log n)`. Ties are broken by the smaller index so the order is fully
/// deterministic.
#[derive(Debug, Clone)]
pub struct IndexedMinHeap {
    keys: Vec<f64>,
    heap: Vec<usize>,
    slot: Vec<usize>,
}

impl IndexedMinHeap {
    pub fn new(keys: Vec<f64>) -> Self {
        let n = keys.len();
        let mut h = Self {
            keys,
            heap: (0..n).collect(),
            slot: (0..n).collect(),
        };
        for i in (0..n / 2).rev() {
            h.sift_down(i);
        }
        h
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn key(&self, i: usize) -> f64 {
        self.keys[i]
    }

    /// Smallest `(index, key)`.
    pub fn peek(&self) -> Option<(usize, f64)> {
        self.heap.first().map(|&i| (i, self.keys[i]))
    }

    pub fn update(&mut self, i: usize, key: f64) {
        let old = self.keys[i];
        self.keys[i] = key;
        let s = self.slot[i];
        if key < old {
            self.sift_up(s);
        } else {
            self.sift_down(s);
        }
    }

    fn less(&self, a: usize, b: usize) -> bool {
        let (ia, ib) = (self.heap[a], self.heap[b]);
        (self.keys[ia], ia) < (self.keys[ib], ib)
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.heap.swap(a, b);
        self.slot[self.heap[a]] = a;
        self.slot[self.heap[b]] = b;
    }

    fn sift_up(&mut self, mut s: usize) {
        while s > 0 {
            let p = (s - 1) / 2;
            if !self.less(s, p) {
                break;
            }
            self.swap(s, p);
            s = p;
        }
    }

    fn sift_down(&mut self, mut s: usize) {
        loop {
            let (l, r) = (2 * s + 1, 2 * s + 2);
            let mut m = s;
            if l < self.heap.len() && self.less(l, m) {
                m = l;
            }
            if r < self.heap.len() && self.less(r, m) {
                m = r;
            }
            if m == s {
                break;
            }
            self.swap(s, m);
            s = m;
        }
    }
}
