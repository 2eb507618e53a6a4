//! Arena-based B-tree over `(OreCipher, row_id)` composite keys.

use std::collections::HashSet;
use std::ops::Bound;
use std::path::Path;

use crate::crypto::{ore_compare, OreCipher};
use crate::wire::{Reader, Writer};

use super::IndexError;

pub const DEFAULT_FANOUT: usize = 64;

const INDEX_MAGIC: &[u8; 4] = b"CBTI";
const INDEX_VERSION: u8 = 1;
/// Version of the key layout inside nodes, recorded in the page-file header.
const KEY_LAYOUT_VERSION: u8 = 1;

/// Index key: ORE ciphertext ordered by plaintext, row id as tie-breaker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OreKey {
    pub cipher: OreCipher,
    pub row_id: u64,
}

#[derive(Debug, Clone)]
struct Node {
    keys: Vec<OreKey>,
    children: Vec<usize>,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Compares two index keys, appending the ciphertext comparison outcome to
/// the log when one is attached.
fn cmp_key(
    a: &OreKey,
    b: &OreKey,
    log: &mut Option<Vec<i8>>,
) -> Result<std::cmp::Ordering, IndexError> {
    let ord = ore_compare(&a.cipher, &b.cipher)?;
    if let Some(log) = log {
        log.push(match ord {
            std::cmp::Ordering::Less => -1,
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Greater => 1,
        });
    }
    Ok(ord.then(a.row_id.cmp(&b.row_id)))
}

pub struct CipherBTree {
    /// Maximum number of children per node.
    fanout: usize,
    nodes: Vec<Node>,
    root: usize,
    key_count: usize,
    tombstones: HashSet<u64>,
    /// Superseded key versions: (row_id, ciphertext bytes). Lets an update
    /// retire one stale key while the row's fresh key stays live.
    stale: HashSet<(u64, Vec<u8>)>,
    /// Rows with at least one stale version, to keep the walk check cheap.
    stale_rows: HashSet<u64>,
    compare_log: Option<Vec<i8>>,
}

impl CipherBTree {
    pub fn new(fanout: usize) -> CipherBTree {
        assert!(fanout >= 4, "fanout below 4 degenerates the tree");
        CipherBTree {
            fanout,
            nodes: vec![Node {
                keys: Vec::new(),
                children: Vec::new(),
            }],
            root: 0,
            key_count: 0,
            tombstones: HashSet::new(),
            stale: HashSet::new(),
            stale_rows: HashSet::new(),
            compare_log: None,
        }
    }

    /// Minimum degree t: nodes hold t-1..=2t-1 keys (root may hold fewer).
    fn min_degree(&self) -> usize {
        self.fanout.div_ceil(2)
    }

    fn max_keys(&self) -> usize {
        2 * self.min_degree() - 1
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    /// Total keys inserted, including tombstoned ones.
    pub fn len(&self) -> usize {
        self.key_count
    }

    pub fn is_empty(&self) -> bool {
        self.key_count == 0
    }

    pub fn live_len(&self) -> usize {
        self.key_count - self.tombstones.len() - self.stale.len()
    }

    pub fn height(&self) -> usize {
        let mut h = 1;
        let mut n = self.root;
        while !self.nodes[n].is_leaf() {
            n = self.nodes[n].children[0];
            h += 1;
        }
        h
    }

    /// Starts recording comparator outcomes on the insert path.
    pub fn record_compares(&mut self) {
        self.compare_log = Some(Vec::new());
    }

    pub fn take_compare_log(&mut self) -> Vec<i8> {
        self.compare_log.take().unwrap_or_default()
    }

    pub fn insert(&mut self, key: OreKey) -> Result<(), IndexError> {
        let mut log = self.compare_log.take();
        let result = self.insert_inner(key, &mut log);
        self.compare_log = log;
        result
    }

    fn insert_inner(&mut self, key: OreKey, log: &mut Option<Vec<i8>>) -> Result<(), IndexError> {
        if self.nodes[self.root].keys.len() == self.max_keys() {
            // Grow upward: fresh root with the old root as its only child.
            let old_root = self.root;
            self.nodes.push(Node {
                keys: Vec::new(),
                children: vec![old_root],
            });
            self.root = self.nodes.len() - 1;
            self.split_child(self.root, 0);
        }
        self.insert_nonfull(self.root, key, log)?;
        self.key_count += 1;
        Ok(())
    }

    /// Splits the full child at `child_idx` of `parent`, moving the median
    /// key up.
    fn split_child(&mut self, parent: usize, child_idx: usize) {
        let t = self.min_degree();
        let child = self.nodes[parent].children[child_idx];
        let right_keys = self.nodes[child].keys.split_off(t);
        let median = self.nodes[child].keys.pop().expect("full node has median");
        let right_children = if self.nodes[child].is_leaf() {
            Vec::new()
        } else {
            self.nodes[child].children.split_off(t)
        };
        self.nodes.push(Node {
            keys: right_keys,
            children: right_children,
        });
        let right = self.nodes.len() - 1;
        self.nodes[parent].keys.insert(child_idx, median);
        self.nodes[parent].children.insert(child_idx + 1, right);
    }

    fn insert_nonfull(
        &mut self,
        node: usize,
        key: OreKey,
        log: &mut Option<Vec<i8>>,
    ) -> Result<(), IndexError> {
        // Position of the first key >= `key`.
        let mut pos = self.nodes[node].keys.len();
        for i in 0..self.nodes[node].keys.len() {
            if cmp_key(&key, &self.nodes[node].keys[i], log)?.is_lt() {
                pos = i;
                break;
            }
        }
        if self.nodes[node].is_leaf() {
            self.nodes[node].keys.insert(pos, key);
            return Ok(());
        }
        let mut child = self.nodes[node].children[pos];
        if self.nodes[child].keys.len() == self.max_keys() {
            self.split_child(node, pos);
            if cmp_key(&key, &self.nodes[node].keys[pos], log)?.is_gt() {
                child = self.nodes[node].children[pos + 1];
            } else {
                child = self.nodes[node].children[pos];
            }
        }
        self.insert_nonfull(child, key, log)
    }

    /// Marks a row id deleted. The key stays in the tree until `rebuild`.
    pub fn delete(&mut self, row_id: u64) {
        self.tombstones.insert(row_id);
    }

    /// Retires one superseded key version of a row; a subsequently inserted
    /// key for the same row remains live.
    pub fn delete_version(&mut self, row_id: u64, cipher: &OreCipher) {
        self.stale.insert((row_id, cipher.to_bytes()));
        self.stale_rows.insert(row_id);
    }

    /// Drops tombstoned keys by reconstructing the tree.
    pub fn rebuild(&mut self) -> Result<(), IndexError> {
        let live = self.keys_in_order()?;
        let mut fresh = CipherBTree::new(self.fanout);
        for key in live {
            fresh.insert(key)?;
        }
        fresh.compare_log = self.compare_log.take();
        *self = fresh;
        Ok(())
    }

    /// Live keys in comparator order.
    pub fn keys_in_order(&self) -> Result<Vec<OreKey>, IndexError> {
        let mut out = Vec::with_capacity(self.live_len());
        self.walk(self.root, &mut |key| {
            out.push(key.clone());
            true
        });
        Ok(out)
    }

    fn skipped(&self, key: &OreKey) -> bool {
        if self.tombstones.contains(&key.row_id) {
            return true;
        }
        self.stale_rows.contains(&key.row_id)
            && self.stale.contains(&(key.row_id, key.cipher.to_bytes()))
    }

    /// In-order walk over live keys; the visitor returns `false` to stop.
    fn walk(&self, node: usize, visit: &mut impl FnMut(&OreKey) -> bool) -> bool {
        let n = &self.nodes[node];
        for i in 0..n.keys.len() {
            if !n.is_leaf() && !self.walk(n.children[i], visit) {
                return false;
            }
            if !self.skipped(&n.keys[i]) && !visit(&n.keys[i]) {
                return false;
            }
        }
        if !n.is_leaf() {
            return self.walk(*n.children.last().unwrap(), visit);
        }
        true
    }

    /// Row ids whose key ciphertext lies in the interval, ascending by
    /// plaintext order.
    pub fn range_scan(
        &self,
        low: Bound<&OreCipher>,
        high: Bound<&OreCipher>,
    ) -> Result<Vec<u64>, IndexError> {
        if let (Bound::Included(lo) | Bound::Excluded(lo), Bound::Included(hi) | Bound::Excluded(hi)) =
            (&low, &high)
        {
            if ore_compare(lo, hi)?.is_gt() {
                return Err(IndexError::InvertedBounds);
            }
        }
        let mut out = Vec::new();
        let mut err = None;
        self.walk(self.root, &mut |key| {
            let above_low = match low {
                Bound::Unbounded => true,
                Bound::Included(lo) => match ore_compare(&key.cipher, lo) {
                    Ok(ord) => ord.is_ge(),
                    Err(e) => {
                        err = Some(e);
                        return false;
                    }
                },
                Bound::Excluded(lo) => match ore_compare(&key.cipher, lo) {
                    Ok(ord) => ord.is_gt(),
                    Err(e) => {
                        err = Some(e);
                        return false;
                    }
                },
            };
            if !above_low {
                return true;
            }
            match high {
                Bound::Unbounded => {
                    out.push(key.row_id);
                    true
                }
                Bound::Included(hi) => match ore_compare(&key.cipher, hi) {
                    Ok(ord) if ord.is_le() => {
                        out.push(key.row_id);
                        true
                    }
                    Ok(_) => false,
                    Err(e) => {
                        err = Some(e);
                        false
                    }
                },
                Bound::Excluded(hi) => match ore_compare(&key.cipher, hi) {
                    Ok(ord) if ord.is_lt() => {
                        out.push(key.row_id);
                        true
                    }
                    Ok(_) => false,
                    Err(e) => {
                        err = Some(e);
                        false
                    }
                },
            }
        });
        match err {
            Some(e) => Err(IndexError::Layout(e)),
            None => Ok(out),
        }
    }

    /// Leftmost live key; decrypts to the true minimum.
    pub fn ore_min(&self) -> Result<OreKey, IndexError> {
        let mut found = None;
        self.walk(self.root, &mut |key| {
            found = Some(key.clone());
            false
        });
        found.ok_or(IndexError::EmptyTree)
    }

    /// Rightmost live key; decrypts to the true maximum.
    pub fn ore_max(&self) -> Result<OreKey, IndexError> {
        let mut last = None;
        self.walk(self.root, &mut |key| {
            last = Some(key.clone());
            true
        });
        last.ok_or(IndexError::EmptyTree)
    }

    /// Structural audit: occupancy bounds, uniform leaf depth, sorted order.
    pub fn check_invariants(&self) -> Result<(), String> {
        let t = self.min_degree();
        let mut leaf_depths = HashSet::new();
        self.audit_node(self.root, true, t, 0, &mut leaf_depths)?;
        if leaf_depths.len() > 1 {
            return Err(format!("leaves at differing depths: {leaf_depths:?}"));
        }
        let keys = self.keys_in_order().map_err(|e| e.to_string())?;
        let mut none = None;
        for pair in keys.windows(2) {
            if cmp_key(&pair[0], &pair[1], &mut none)
                .map_err(|e| e.to_string())?
                .is_gt()
            {
                return Err("in-order traversal not sorted".into());
            }
        }
        Ok(())
    }

    fn audit_node(
        &self,
        node: usize,
        is_root: bool,
        t: usize,
        depth: usize,
        leaf_depths: &mut HashSet<usize>,
    ) -> Result<(), String> {
        let n = &self.nodes[node];
        if n.keys.len() > 2 * t - 1 {
            return Err(format!("node {node} overfull: {} keys", n.keys.len()));
        }
        if !is_root && n.keys.len() < t - 1 {
            return Err(format!("node {node} underfull: {} keys", n.keys.len()));
        }
        if n.is_leaf() {
            leaf_depths.insert(depth);
            return Ok(());
        }
        if n.children.len() != n.keys.len() + 1 {
            return Err(format!("node {node} child/key count mismatch"));
        }
        for &c in &n.children {
            self.audit_node(c, false, t, depth + 1, leaf_depths)?;
        }
        Ok(())
    }

    /// Persists the tree as a page file: header (magic, version, fanout, key
    /// layout version, root page), then one record per node.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let mut w = Writer::new(INDEX_VERSION);
        w.raw(INDEX_MAGIC);
        w.u8(KEY_LAYOUT_VERSION);
        w.u32(self.fanout as u32);
        w.u64(self.root as u64);
        w.u64(self.key_count as u64);
        w.u32(self.tombstones.len() as u32);
        let mut tombs: Vec<u64> = self.tombstones.iter().copied().collect();
        tombs.sort_unstable();
        for t in tombs {
            w.u64(t);
        }
        w.u32(self.stale.len() as u32);
        let mut stale: Vec<&(u64, Vec<u8>)> = self.stale.iter().collect();
        stale.sort_unstable();
        for (row_id, cipher) in stale {
            w.u64(*row_id);
            w.bytes(cipher);
        }
        w.u64(self.nodes.len() as u64);
        for node in &self.nodes {
            w.u32(node.keys.len() as u32);
            for key in &node.keys {
                w.bytes(&key.cipher.to_bytes());
                w.u64(key.row_id);
            }
            w.u32(node.children.len() as u32);
            for &c in &node.children {
                w.u64(c as u64);
            }
        }
        std::fs::write(path, w.finish())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CipherBTree, IndexError> {
        let data = std::fs::read(path)?;
        let mut r = Reader::new(&data, INDEX_VERSION)?;
        let magic = r.raw(4)?;
        if magic != INDEX_MAGIC {
            return Err(IndexError::Wire(crate::wire::WireError::Malformed(
                "bad index magic",
            )));
        }
        let _key_layout = r.u8()?;
        let fanout = r.u32()? as usize;
        let root = r.u64()? as usize;
        let key_count = r.u64()? as usize;
        let tomb_count = r.u32()? as usize;
        let mut tombstones = HashSet::with_capacity(tomb_count);
        for _ in 0..tomb_count {
            tombstones.insert(r.u64()?);
        }
        let stale_count = r.u32()? as usize;
        let mut stale = HashSet::with_capacity(stale_count);
        let mut stale_rows = HashSet::new();
        for _ in 0..stale_count {
            let row_id = r.u64()?;
            let cipher = r.bytes()?.to_vec();
            stale_rows.insert(row_id);
            stale.insert((row_id, cipher));
        }
        let node_count = r.u64()? as usize;
        let mut nodes = Vec::with_capacity(node_count);
        for _ in 0..node_count {
            let key_len = r.u32()? as usize;
            let mut keys = Vec::with_capacity(key_len);
            for _ in 0..key_len {
                let cipher = OreCipher::from_bytes(r.bytes()?)?;
                let row_id = r.u64()?;
                keys.push(OreKey { cipher, row_id });
            }
            let child_len = r.u32()? as usize;
            let mut children = Vec::with_capacity(child_len);
            for _ in 0..child_len {
                children.push(r.u64()? as usize);
            }
            nodes.push(Node { keys, children });
        }
        r.done()?;
        Ok(CipherBTree {
            fanout,
            nodes,
            root,
            key_count,
            tombstones,
            stale,
            stale_rows,
            compare_log: None,
        })
    }
}
