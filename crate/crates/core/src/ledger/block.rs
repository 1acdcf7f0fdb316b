use crate::error::LedgerError;
use crate::oracle::HashFn;
use crate::types::{Digest, NodeId, Payload};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

/// VRF output attached to a proposal and checked by the permissibility predicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub value: Digest,
    pub proof: Digest,
}

/// `(x, H(parent), v, e, seed)` plus the proposer needed to check the seed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub content: Vec<Payload>,
    pub parent: Option<Digest>,
    pub view: u64,
    pub epoch: u64,
    pub seed: Option<Seed>,
    pub proposer: Option<NodeId>,
}

impl Block {
    pub fn genesis() -> Block {
        Block {
            content: Vec::new(),
            parent: None,
            view: 0,
            epoch: 0,
            seed: None,
            proposer: None,
        }
    }

    pub fn is_genesis(&self) -> bool {
        *self == Block::genesis()
    }

    /// Canonical byte layout, fields in declaration order, all integers little endian:
    ///
    /// ```text
    /// u32 count, then per payload: u32 len, bytes
    /// u8 has_parent, [16 bytes parent]
    /// u64 view
    /// u64 epoch
    /// u8 has_seed, [16 bytes value, 16 bytes proof]
    /// u8 has_proposer, [u32 proposer]
    /// ```
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(64 + self.content.iter().map(|p| p.len() + 4).sum::<usize>());
        b.extend_from_slice(&(self.content.len() as u32).to_le_bytes());
        for p in &self.content {
            b.extend_from_slice(&(p.len() as u32).to_le_bytes());
            b.extend_from_slice(p);
        }
        match self.parent {
            Some(h) => {
                b.push(1);
                b.extend_from_slice(&h.to_bytes());
            }
            None => b.push(0),
        }
        b.extend_from_slice(&self.view.to_le_bytes());
        b.extend_from_slice(&self.epoch.to_le_bytes());
        match self.seed {
            Some(s) => {
                b.push(1);
                b.extend_from_slice(&s.value.to_bytes());
                b.extend_from_slice(&s.proof.to_bytes());
            }
            None => b.push(0),
        }
        match self.proposer {
            Some(p) => {
                b.push(1);
                b.extend_from_slice(&p.0.to_le_bytes());
            }
            None => b.push(0),
        }
        b
    }

    pub fn id(&self, h: &HashFn) -> Digest {
        h.hash(&self.to_canonical_bytes())
    }
}

/// A block together with facts derived on insertion.
#[derive(Debug)]
pub struct StoredBlock {
    pub id: Digest,
    pub block: Block,
    pub height: u64,
    /// Parent valid and `(epoch, view)` strictly increases from the parent.
    pub valid: bool,
}

/// Content-addressed set of every block any node has produced in one execution.
/// Nodes still only act on blocks they received; the store just resolves hashes.
#[derive(Clone)]
pub struct BlockStore {
    hash: HashFn,
    blocks: HashMap<Digest, Arc<StoredBlock>>,
    genesis: Digest,
}

impl BlockStore {
    pub fn new(hash: HashFn) -> Self {
        let g = Block::genesis();
        let id = g.id(&hash);
        let mut blocks = HashMap::new();
        blocks.insert(
            id,
            Arc::new(StoredBlock {
                id,
                block: g,
                height: 0,
                valid: true,
            }),
        );
        BlockStore {
            hash,
            blocks,
            genesis: id,
        }
    }

    pub fn genesis(&self) -> Digest {
        self.genesis
    }

    pub fn hash_fn(&self) -> HashFn {
        self.hash
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Adds a block whose parent is already known. Idempotent.
    pub fn insert(&mut self, block: Block) -> Result<Digest, LedgerError> {
        let id = block.id(&self.hash);
        if self.blocks.contains_key(&id) {
            return Ok(id);
        }
        let parent_hash = block
            .parent
            .ok_or(LedgerError::UnresolvableParent(Digest::default()))?;
        let parent = self
            .blocks
            .get(&parent_hash)
            .ok_or(LedgerError::UnresolvableParent(parent_hash))?;
        let pb = &parent.block;
        let ordered = pb.epoch < block.epoch || (pb.epoch == block.epoch && pb.view < block.view);
        let stored = StoredBlock {
            id,
            height: parent.height + 1,
            valid: parent.valid && ordered,
            block,
        };
        self.blocks.insert(id, Arc::new(stored));
        Ok(id)
    }

    pub fn get(&self, id: &Digest) -> Option<&Arc<StoredBlock>> {
        self.blocks.get(id)
    }

    pub fn contains(&self, id: &Digest) -> bool {
        self.blocks.contains_key(id)
    }

    fn resolve(&self, id: &Digest) -> Result<&Arc<StoredBlock>, LedgerError> {
        self.blocks
            .get(id)
            .ok_or(LedgerError::UnresolvableParent(*id))
    }

    pub fn height(&self, id: &Digest) -> Result<u64, LedgerError> {
        Ok(self.resolve(id)?.height)
    }

    pub fn parent(&self, id: &Digest) -> Option<Digest> {
        self.blocks.get(id).and_then(|b| b.block.parent)
    }

    /// Ancestor of `id` at `height`, if `id` is at least that tall.
    pub fn ancestor_at(&self, id: &Digest, height: u64) -> Result<Option<Digest>, LedgerError> {
        let mut cur = self.resolve(id)?;
        if cur.height < height {
            return Ok(None);
        }
        while cur.height > height {
            let p = cur.block.parent.expect("non-genesis block has a parent");
            cur = self.resolve(&p)?;
        }
        Ok(Some(cur.id))
    }

    /// `a` equals `b` or has `b` as an ancestor.
    pub fn extends(&self, a: &Digest, b: &Digest) -> Result<bool, LedgerError> {
        let hb = self.resolve(b)?.height;
        Ok(self.ancestor_at(a, hb)? == Some(*b))
    }

    pub fn conflicts(&self, a: &Digest, b: &Digest) -> Result<bool, LedgerError> {
        Ok(!self.extends(a, b)? && !self.extends(b, a)?)
    }

    pub fn valid(&self, id: &Digest) -> Result<bool, LedgerError> {
        Ok(self.resolve(id)?.valid)
    }

    /// Block ids from genesis (exclusive) to `id` (inclusive).
    pub fn path(&self, id: &Digest) -> Result<Vec<Digest>, LedgerError> {
        let mut out = Vec::new();
        let mut cur = self.resolve(id)?;
        while let Some(p) = cur.block.parent {
            out.push(cur.id);
            cur = self.resolve(&p)?;
        }
        out.reverse();
        Ok(out)
    }

    /// Blocks strictly after `from` up to and including `to`. `from` must be an
    /// ancestor of `to`.
    pub fn segment(&self, from: &Digest, to: &Digest) -> Result<Vec<Digest>, LedgerError> {
        let hf = self.height(from)?;
        let mut out = Vec::new();
        let mut cur = self.resolve(to)?;
        while cur.height > hf {
            out.push(cur.id);
            let p = cur.block.parent.expect("non-genesis block has a parent");
            cur = self.resolve(&p)?;
        }
        out.reverse();
        Ok(out)
    }

    /// Deepest common ancestor.
    pub fn meet(&self, a: &Digest, b: &Digest) -> Result<Digest, LedgerError> {
        let h = self.height(a)?.min(self.height(b)?);
        let mut x = self.ancestor_at(a, h)?.expect("height checked");
        let mut y = self.ancestor_at(b, h)?.expect("height checked");
        while x != y {
            x = self.parent(&x).expect("non-genesis");
            y = self.parent(&y).expect("non-genesis");
        }
        Ok(x)
    }

    /// Payloads decided by the chain ending at `id`, oldest first.
    pub fn payloads(&self, id: &Digest) -> Result<Vec<Payload>, LedgerError> {
        let mut out = Vec::new();
        for b in self.path(id)? {
            out.extend(self.resolve(&b)?.block.content.iter().cloned());
        }
        Ok(out)
    }
}
