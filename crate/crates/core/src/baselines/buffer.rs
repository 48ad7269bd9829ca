use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub vector: Vec<f64>,
    /// Number of original samples merged into this prototype.
    pub count: u64,
    pub label: usize,
}

/// Per-class, capacity-bounded prototype store.
///
/// Inserting into a full class buffer merges the closest pair (Euclidean) into
/// their count-weighted mean, which keeps the class centroid equal to the
/// mean of everything ever inserted.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBuffer {
    capacity: usize,
    dim: usize,
    buffers: Vec<Vec<Prototype>>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl PrototypeBuffer {
    pub fn new(capacity_per_class: usize, dim: usize, num_classes: usize) -> Self {
        assert!(capacity_per_class >= 1, "prototype capacity must be at least 1");
        Self {
            capacity: capacity_per_class,
            dim,
            buffers: vec![Vec::new(); num_classes],
        }
    }

    pub fn capacity_per_class(&self) -> usize {
        self.capacity
    }

    pub fn num_classes(&self) -> usize {
        self.buffers.len()
    }

    pub fn class_buffer(&self, k: usize) -> &[Prototype] {
        &self.buffers[k]
    }

    pub fn len(&self) -> usize {
        self.buffers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All prototypes, class-major.
    pub fn iter(&self) -> impl Iterator<Item = &Prototype> {
        self.buffers.iter().flatten()
    }

    pub fn insert(&mut self, z: &[f64], y: usize) -> Result<()> {
        if y >= self.buffers.len() {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: self.buffers.len(),
            });
        }
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        let buf = &mut self.buffers[y];
        buf.push(Prototype {
            vector: z.to_vec(),
            count: 1,
            label: y,
        });
        if buf.len() > self.capacity {
            let (i, j) = closest_pair(buf);
            let q = buf.remove(j);
            let p = &mut buf[i];
            let (cp, cq) = (p.count as f64, q.count as f64);
            for (a, b) in p.vector.iter_mut().zip(&q.vector) {
                *a = (cp * *a + cq * b) / (cp + cq);
            }
            p.count += q.count;
        }
        Ok(())
    }

    /// Count-weighted mean of class `k`'s prototypes.
    pub fn centroid(&self, k: usize) -> Option<Vec<f64>> {
        let buf = &self.buffers[k];
        let total: u64 = buf.iter().map(|p| p.count).sum();
        if total == 0 {
            return None;
        }
        let mut c = vec![0.0; self.dim];
        for p in buf {
            for (a, b) in c.iter_mut().zip(&p.vector) {
                *a += p.count as f64 * b;
            }
        }
        for a in &mut c {
            *a /= total as f64;
        }
        Some(c)
    }

    /// Stored `f64` values (prototypes plus counts), for memory accounting.
    pub fn stored_values(&self) -> u64 {
        self.iter().map(|p| p.vector.len() as u64 + 1).sum()
    }
}

/// Lexicographically first `(i, j)`, `i < j`, with minimal distance.
fn closest_pair(buf: &[Prototype]) -> (usize, usize) {
    let mut best = (0, 1);
    let mut best_d = f64::INFINITY;
    for i in 0..buf.len() {
        for j in (i + 1)..buf.len() {
            let d = squared_distance(&buf[i].vector, &buf[j].vector);
            if d < best_d {
                best_d = d;
                best = (i, j);
            }
        }
    }
    best
}
