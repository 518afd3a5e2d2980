use std::collections::VecDeque;

use super::{CaseError, Network};

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    /// Returns false when `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

pub(super) fn check_radial(net: &Network) -> Result<(), CaseError> {
    let n = net.buses.len();
    if net.lines.len() + 1 != n {
        return Err(CaseError::Validation(format!(
            "non-radial network: {} lines for {} buses (a radial feeder needs exactly {})",
            net.lines.len(),
            n,
            n.saturating_sub(1)
        )));
    }
    let mut uf = UnionFind::new(n);
    for line in &net.lines {
        // bus ids were checked by the caller
        let a = net.bus_position(line.from).expect("validated bus");
        let b = net.bus_position(line.to).expect("validated bus");
        if !uf.union(a, b) {
            return Err(CaseError::Validation(format!(
                "non-radial network: line {}-{} closes a loop",
                line.from, line.to
            )));
        }
    }
    Ok(())
}

/// Lines oriented away from the substation.
///
/// Positions refer to `Network::buses`; line indices to `Network::lines`.
#[derive(Debug, Clone)]
pub struct RadialView {
    pub substation: usize,
    /// (parent bus position, child bus position) per line
    pub ends: Vec<(usize, usize)>,
    /// incoming line of each bus (`None` for the substation)
    pub parent_line: Vec<Option<usize>>,
    /// outgoing lines of each bus
    pub child_lines: Vec<Vec<usize>>,
    /// buses in breadth-first order from the substation
    pub order: Vec<usize>,
}

impl RadialView {
    /// The network must already be validated as radial.
    pub fn new(net: &Network) -> Self {
        let n = net.buses.len();
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, line) in net.lines.iter().enumerate() {
            let a = net.bus_position(line.from).expect("validated bus");
            let b = net.bus_position(line.to).expect("validated bus");
            adjacency[a].push((k, b));
            adjacency[b].push((k, a));
        }
        let root = net.bus_position(net.substation).expect("validated substation");
        let mut ends = vec![(usize::MAX, usize::MAX); net.lines.len()];
        let mut parent_line = vec![None; n];
        let mut child_lines = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(bus) = queue.pop_front() {
            order.push(bus);
            for &(k, other) in &adjacency[bus] {
                if !seen[other] {
                    seen[other] = true;
                    ends[k] = (bus, other);
                    parent_line[other] = Some(k);
                    child_lines[bus].push(k);
                    queue.push_back(other);
                }
            }
        }
        Self { substation: root, ends, parent_line, child_lines, order }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_case;
    use super::*;

    fn net(lines: &str) -> Network {
        let text = format!(
            "[network]\nname = t\ns_base_kva = 100\nsubstation = 1\nv_min = 0.9\nv_max = 1.1\n\
             substation_p_max = 10\nsubstation_q_max = 10\n[lines]\n{lines}\n{}",
            super::super::format::TEST_TAIL
        );
        parse_case(&text).unwrap().network
    }

    #[test]
    fn orientation_follows_substation() {
        // 3 -> 2 written backwards
        let n = net("2 1 0.01 0.01 1\n3 2 0.01 0.01 1\n2 4 0.01 0.01 1");
        n.validate().unwrap();
        let v = n.radial();
        assert_eq!(v.substation, 0);
        assert_eq!(v.ends[0], (0, 1));
        assert_eq!(v.ends[1], (1, 2));
        assert_eq!(v.ends[2], (1, 3));
        assert_eq!(v.parent_line[0], None);
        assert_eq!(v.child_lines[1], vec![1, 2]);
        assert_eq!(v.order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn cycle_is_rejected() {
        let n = net("1 2 0.01 0.01 1\n2 3 0.01 0.01 1\n3 1 0.01 0.01 1");
        let err = n.validate().unwrap_err().to_string();
        assert!(err.contains("non-radial"), "{err}");
    }

    #[test]
    fn disconnected_with_right_count_is_rejected() {
        // 4 buses, 3 lines, but 1-2-3 loop and 4 isolated
        let mut n = net("1 2 0.01 0.01 1\n2 3 0.01 0.01 1\n3 1 0.01 0.01 1");
        n.buses.push(super::super::BusId(4));
        let err = n.validate().unwrap_err().to_string();
        assert!(err.contains("loop"), "{err}");
    }
}
