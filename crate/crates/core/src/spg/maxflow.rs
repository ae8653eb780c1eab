use std::collections::VecDeque;

/// Max-flow / min-cut on a directed graph with float capacities, by Dinic's
/// blocking-flow method.
pub struct FlowGraph {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

impl FlowGraph {
    pub fn new(n: usize) -> Self {
        FlowGraph { head: vec![Vec::new(); n], to: Vec::new(), cap: Vec::new() }
    }

    pub fn num_nodes(&self) -> usize {
        self.head.len()
    }

    /// Adds `a → b` with capacity `c_ab` and the reverse arc with `c_ba`.
    pub fn add_edge(&mut self, a: usize, b: usize, c_ab: f64, c_ba: f64) {
        let e = self.to.len();
        self.to.extend([b, a]);
        self.cap.extend([c_ab.max(0.0), c_ba.max(0.0)]);
        self.head[a].push(e);
        self.head[b].push(e + 1);
    }

    fn levels(&self, s: usize, eps: f64) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.num_nodes()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > eps && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    q.push_back(v);
                }
            }
        }
        level
    }

    /// Pushes a blocking flow along level-increasing arcs (iterative DFS).
    fn blocking(&mut self, s: usize, t: usize, level: &[usize], eps: f64) -> f64 {
        let mut it = vec![0usize; self.num_nodes()];
        let mut total = 0.0;
        loop {
            let mut path: Vec<usize> = Vec::new();
            let mut u = s;
            loop {
                if u == t {
                    break;
                }
                let mut advanced = false;
                while it[u] < self.head[u].len() {
                    let e = self.head[u][it[u]];
                    let v = self.to[e];
                    if self.cap[e] > eps && level[v] == level[u].wrapping_add(1) {
                        path.push(e);
                        u = v;
                        advanced = true;
                        break;
                    }
                    it[u] += 1;
                }
                if !advanced {
                    if u == s {
                        return total;
                    }
                    // dead end: retreat and skip the arc that led here
                    let e = path.pop().expect("non-empty path");
                    u = self.to[e ^ 1];
                    it[u] += 1;
                }
            }
            let f = path.iter().map(|&e| self.cap[e]).fold(f64::INFINITY, f64::min);
            for &e in &path {
                self.cap[e] -= f;
                self.cap[e ^ 1] += f;
            }
            total += f;
        }
    }

    /// Maximum flow from `s` to `t`. Residual capacities at or below `eps`
    /// count as saturated.
    pub fn max_flow(&mut self, s: usize, t: usize, eps: f64) -> f64 {
        let mut flow = 0.0;
        loop {
            let level = self.levels(s, eps);
            if level[t] == usize::MAX {
                return flow;
            }
            flow += self.blocking(s, t, &level, eps);
        }
    }

    /// Nodes reachable from `s` in the residual graph (the source side of a
    /// minimum cut once [`FlowGraph::max_flow`] has run).
    pub fn source_side(&self, s: usize, eps: f64) -> Vec<bool> {
        self.levels(s, eps).into_iter().map(|l| l != usize::MAX).collect()
    }
}
