//! Exact s-t max-flow by shortest augmenting paths (BFS level graph with
//! blocking-flow phases).

/// Residuals at or below this are treated as saturated.
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub cap: f64,
    pub rev_cap: f64,
}

/// A capacitated graph with per-node source and sink terminal arcs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowNetwork {
    cap_source: Vec<f64>,
    cap_sink: Vec<f64>,
    arcs: Vec<Arc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxFlow {
    pub flow: f64,
    /// `true` for nodes on the source side of the minimum cut.
    pub source_side: Vec<bool>,
}

impl FlowNetwork {
    pub fn new(node_count: usize) -> Self {
        Self {
            cap_source: vec![0.0; node_count],
            cap_sink: vec![0.0; node_count],
            arcs: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.cap_source.len()
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn terminal(&self, node: usize) -> (f64, f64) {
        (self.cap_source[node], self.cap_sink[node])
    }

    pub fn set_terminal(&mut self, node: usize, cap_source: f64, cap_sink: f64) {
        debug_assert!(cap_source >= 0.0 && cap_sink >= 0.0);
        self.cap_source[node] = cap_source;
        self.cap_sink[node] = cap_sink;
    }

    /// Adds `from -> to` with capacity `cap` and `to -> from` with `rev_cap`.
    pub fn add_arc(&mut self, from: usize, to: usize, cap: f64, rev_cap: f64) {
        assert_ne!(from, to, "self-arcs are not allowed");
        assert!(from < self.node_count() && to < self.node_count());
        debug_assert!(cap >= 0.0 && rev_cap >= 0.0);
        self.arcs.push(Arc {
            from,
            to,
            cap,
            rev_cap,
        });
    }

    /// Total capacity of the arcs leaving the source side.
    pub fn cut_capacity(&self, source_side: &[bool]) -> f64 {
        let mut total = 0.0;
        for (i, &src) in source_side.iter().enumerate() {
            total += if src { self.cap_sink[i] } else { self.cap_source[i] };
        }
        for a in &self.arcs {
            match (source_side[a.from], source_side[a.to]) {
                (true, false) => total += a.cap,
                (false, true) => total += a.rev_cap,
                _ => {}
            }
        }
        total
    }

    pub fn max_flow(&self) -> MaxFlow {
        let mut solver = Solver::build(self);
        let flow = solver.run();
        let source_side = solver.source_side();
        debug_assert!(
            {
                let cut = self.cut_capacity(&source_side);
                (cut - flow).abs() <= 1e-6 * cut.abs().max(1.0)
            },
            "max-flow value and min-cut capacity disagree"
        );
        MaxFlow { flow, source_side }
    }
}

/// Residual graph in CSR form; node `n` is the source, `n + 1` the sink.
struct Solver {
    n: usize,
    offsets: Vec<usize>,
    to: Vec<u32>,
    rev: Vec<u32>,
    residual: Vec<f64>,
    level: Vec<i32>,
    cursor: Vec<usize>,
    pushed: f64,
}

impl Solver {
    fn build(net: &FlowNetwork) -> Self {
        let n = net.node_count();
        let (s, t) = (n, n + 1);
        let mut pushed = 0.0;
        // Route min(cs, ct) straight through each node first.
        let mut cs = net.cap_source.clone();
        let mut ct = net.cap_sink.clone();
        for i in 0..n {
            let m = cs[i].min(ct[i]);
            pushed += m;
            cs[i] -= m;
            ct[i] -= m;
        }
        let mut degree = vec![0usize; n + 2];
        for i in 0..n {
            if cs[i] > 0.0 {
                degree[s] += 1;
                degree[i] += 1;
            }
            if ct[i] > 0.0 {
                degree[i] += 1;
                degree[t] += 1;
            }
        }
        for a in &net.arcs {
            degree[a.from] += 1;
            degree[a.to] += 1;
        }
        let mut offsets = vec![0usize; n + 3];
        for v in 0..n + 2 {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let m = offsets[n + 2];
        let mut fill = offsets.clone();
        let mut to = vec![0u32; m];
        let mut rev = vec![0u32; m];
        let mut residual = vec![0.0; m];
        let mut link = |u: usize, v: usize, c: f64, rc: f64| {
            let (eu, ev) = (fill[u], fill[v]);
            fill[u] += 1;
            fill[v] += 1;
            to[eu] = v as u32;
            to[ev] = u as u32;
            rev[eu] = ev as u32;
            rev[ev] = eu as u32;
            residual[eu] = c;
            residual[ev] = rc;
        };
        for i in 0..n {
            if cs[i] > 0.0 {
                link(s, i, cs[i], 0.0);
            }
            if ct[i] > 0.0 {
                link(i, t, ct[i], 0.0);
            }
        }
        for a in &net.arcs {
            link(a.from, a.to, a.cap, a.rev_cap);
        }
        Self {
            n,
            offsets,
            to,
            rev,
            residual,
            level: vec![-1; n + 2],
            cursor: vec![0; n + 2],
            pushed,
        }
    }

    fn bfs(&mut self) -> bool {
        let (s, t) = (self.n, self.n + 1);
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for e in self.offsets[u]..self.offsets[u + 1] {
                let v = self.to[e] as usize;
                if self.residual[e] > EPS && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[t] >= 0
    }

    /// One blocking flow over the current level graph.
    fn blocking_flow(&mut self) -> f64 {
        let (s, t) = (self.n, self.n + 1);
        self.cursor.copy_from_slice(&self.offsets[..self.n + 2]);
        let mut total = 0.0;
        let mut path: Vec<usize> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let bottleneck = path
                    .iter()
                    .map(|&e| self.residual[e])
                    .fold(f64::INFINITY, f64::min);
                for &e in &path {
                    self.residual[e] -= bottleneck;
                    self.residual[self.rev[e] as usize] += bottleneck;
                }
                total += bottleneck;
                path.clear();
                u = s;
                continue;
            }
            let end = self.offsets[u + 1];
            let mut advanced = false;
            while self.cursor[u] < end {
                let e = self.cursor[u];
                let v = self.to[e] as usize;
                if self.residual[e] > EPS && self.level[v] == self.level[u] + 1 {
                    path.push(e);
                    u = v;
                    advanced = true;
                    break;
                }
                self.cursor[u] += 1;
            }
            if advanced {
                continue;
            }
            if u == s {
                return total;
            }
            // dead end: prune the node and retreat
            self.level[u] = -1;
            let e = path.pop().expect("non-source node has an entry arc");
            u = self.to[self.rev[e] as usize] as usize;
            self.cursor[u] += 1;
        }
    }

    fn run(&mut self) -> f64 {
        let mut flow = self.pushed;
        while self.bfs() {
            flow += self.blocking_flow();
        }
        flow
    }

    /// Nodes reachable from the source in the final residual graph.
    fn source_side(&self) -> Vec<bool> {
        let s = self.n;
        let mut seen = vec![false; self.n + 2];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for e in self.offsets[u]..self.offsets[u + 1] {
                let v = self.to[e] as usize;
                if self.residual[e] > EPS && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.truncate(self.n);
        seen
    }
}
