/// Dense numbering of the free unknowns of a nodal field with `per_node`
/// components; prescribed components map to `None`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofMap {
    per_node: usize,
    map: Vec<Option<usize>>,
    num_free: usize,
}

impl DofMap {
    pub fn new(num_nodes: usize, per_node: usize, is_fixed: impl Fn(usize, usize) -> bool) -> Self {
        let mut map = Vec::with_capacity(num_nodes * per_node);
        let mut next = 0;
        for n in 0..num_nodes {
            for c in 0..per_node {
                if is_fixed(n, c) {
                    map.push(None);
                } else {
                    map.push(Some(next));
                    next += 1;
                }
            }
        }
        DofMap {
            per_node,
            map,
            num_free: next,
        }
    }

    #[inline]
    pub fn dof(&self, node: usize, comp: usize) -> Option<usize> {
        self.map[node * self.per_node + comp]
    }

    #[inline]
    pub fn per_node(&self) -> usize {
        self.per_node
    }

    #[inline]
    pub fn num_free(&self) -> usize {
        self.num_free
    }

    /// Free-dof indices for every component of every listed node, in order.
    pub fn element_dofs(&self, nodes: &[usize]) -> Vec<Option<usize>> {
        nodes
            .iter()
            .flat_map(|&n| (0..self.per_node).map(move |c| self.dof(n, c)))
            .collect()
    }

    /// The free entries of [`Self::element_dofs`], for sparsity construction.
    pub fn clique(&self, nodes: &[usize]) -> Vec<usize> {
        self.element_dofs(nodes).into_iter().flatten().collect()
    }

    /// Global (node-major) index of every free dof.
    pub fn free_to_global(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_free];
        for (g, d) in self.map.iter().enumerate() {
            if let Some(d) = d {
                out[*d] = g;
            }
        }
        out
    }
}
