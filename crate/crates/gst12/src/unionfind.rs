//! Union-find with path compression, union by size, and a deterministic
//! representative: the smallest original index in each class.

#[derive(Clone, Debug)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    min_in_class: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
            min_in_class: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Smallest original index in x's class; stable across unions.
    pub fn rep(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.min_in_class[r]
    }

    /// Merges the two classes; returns false if already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.min_in_class[big] = self.min_in_class[big].min(self.min_in_class[small]);
        true
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    pub fn class_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }

    /// Number of classes.
    pub fn class_count(&mut self) -> usize {
        (0..self.len()).filter(|&x| self.find(x) == x).count()
    }

    /// Sorted representatives (smallest member of each class).
    pub fn class_reps(&mut self) -> Vec<usize> {
        let mut reps = Vec::new();
        for x in 0..self.len() {
            if self.find(x) == x {
                reps.push(self.min_in_class[x]);
            }
        }
        reps.sort_unstable();
        reps
    }

    /// Members of x's class, sorted.
    pub fn class_members(&mut self, x: usize) -> Vec<usize> {
        let r = self.find(x);
        (0..self.len()).filter(|&y| self.find(y) == r).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rep_is_smallest_member() {
        let mut uf = UnionFind::new(6);
        uf.union(4, 2);
        uf.union(2, 5);
        assert_eq!(uf.rep(5), 2);
        assert_eq!(uf.rep(4), 2);
        assert_eq!(uf.class_size(5), 3);
        assert_eq!(uf.class_count(), 4);
        assert_eq!(uf.class_reps(), vec![0, 1, 2, 3]);
        assert_eq!(uf.class_members(4), vec![2, 4, 5]);
    }
}
