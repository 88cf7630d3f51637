//! Content-addressed off-chain documents with role-based access.
//!
//! Each document is encrypted under its own key; that key is wrapped once per
//! role in the document's policy using the role's shared key. Grants therefore
//! attach to roles, not individuals: a newly admitted bank reads every
//! document whose policy names `Bank` without any re-encryption.
//!
//! Confidentiality holds against this module's interface. Anyone holding a
//! role key outside the policy's intent is outside the threat model.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::PathBuf;
use std::sync::RwLock;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical;
use crate::contracts::GuaranteeCase;
use crate::crypto::{hash, hash_parts, Address, ContentId, Digest};
use crate::registry::{Denial, Registry, Role};

#[derive(Debug, Error)]
pub enum DocError {
    #[error("access policy is empty")]
    EmptyPolicy,
    #[error("no key for role {0} in keyring")]
    MissingRoleKey(Role),
    #[error("document not found")]
    NotFound,
    #[error("document failed integrity checks")]
    Tampered,
    #[error("requester's role is not in the document policy")]
    RoleNotInPolicy,
    #[error("requester is not an active admitted actor")]
    NotAdmitted,
    #[error("case is not in a state that permits sharing")]
    WrongState,
    #[error("actor is not the case CGI")]
    NotCaseCgi,
    #[error("document policy does not permit a bank grant")]
    PolicyNotGrantable,
    #[error("storage: {0}")]
    Io(#[from] io::Error),
}

impl DocError {
    pub fn code(&self) -> &'static str {
        match self {
            DocError::EmptyPolicy => "EmptyPolicy",
            DocError::MissingRoleKey(_) => "MissingRoleKey",
            DocError::NotFound => "NotFound",
            DocError::Tampered => "Tampered",
            DocError::RoleNotInPolicy => "RoleNotInPolicy",
            DocError::NotAdmitted => "NotAdmitted",
            DocError::WrongState => "WrongState",
            DocError::NotCaseCgi => "NotCaseCgi",
            DocError::PolicyNotGrantable => "PolicyNotGrantable",
            DocError::Io(_) => "Io",
        }
    }
}

/// Non-empty, immutable set of roles that may decrypt a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Role>", into = "Vec<Role>")]
pub struct AccessPolicy(BTreeSet<Role>);

impl AccessPolicy {
    pub fn new<I: IntoIterator<Item = Role>>(roles: I) -> Result<AccessPolicy, DocError> {
        let set: BTreeSet<Role> = roles.into_iter().collect();
        if set.is_empty() {
            return Err(DocError::EmptyPolicy);
        }
        Ok(AccessPolicy(set))
    }

    pub fn allows(&self, role: Role) -> bool {
        self.0.contains(&role)
    }

    pub fn roles(&self) -> impl Iterator<Item = Role> + '_ {
        self.0.iter().copied()
    }

    pub fn with(&self, role: Role) -> AccessPolicy {
        let mut set = self.0.clone();
        set.insert(role);
        AccessPolicy(set)
    }

    fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical(self).expect("policy is canonical-serializable")
    }
}

impl TryFrom<Vec<Role>> for AccessPolicy {
    type Error = String;
    fn try_from(v: Vec<Role>) -> Result<Self, String> {
        AccessPolicy::new(v).map_err(|e| e.to_string())
    }
}

impl From<AccessPolicy> for Vec<Role> {
    fn from(p: AccessPolicy) -> Vec<Role> {
        p.0.into_iter().collect()
    }
}

/// Shared per-role symmetric keys.
#[derive(Clone, Default)]
pub struct RoleKeyring {
    keys: BTreeMap<Role, [u8; 32]>,
}

impl std::fmt::Debug for RoleKeyring {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RoleKeyring").field("roles", &self.keys.keys().collect::<Vec<_>>()).finish()
    }
}

impl RoleKeyring {
    /// Every role's key derived from one deployment secret.
    pub fn derive(secret: &[u8; 32]) -> RoleKeyring {
        let keys = Role::ALL
            .into_iter()
            .map(|r| (r, hash_parts(&[b"role-key/", secret, b"/", r.as_str().as_bytes()]).0))
            .collect();
        RoleKeyring { keys }
    }

    pub fn insert(&mut self, role: Role, key: [u8; 32]) {
        self.keys.insert(role, key);
    }

    pub fn without(&self, role: Role) -> RoleKeyring {
        let mut k = self.clone();
        k.keys.remove(&role);
        k
    }

    fn key(&self, role: Role) -> Result<&[u8; 32], DocError> {
        self.keys.get(&role).ok_or(DocError::MissingRoleKey(role))
    }
}

/// Stored representation, serialized canonically. Its hash is the ContentId.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub policy: AccessPolicy,
    pub plaintext_hash: Digest,
    pub wrapped_keys: BTreeMap<Role, String>,
    pub ciphertext: String,
    pub nonce: String,
}

impl Envelope {
    pub fn to_bytes(&self) -> Vec<u8> {
        to_canonical(self).expect("envelope is canonical-serializable")
    }

    pub fn content_id(&self) -> ContentId {
        ContentId(hash(&self.to_bytes()).0)
    }
}

fn nonce_for(label: &[u8], key: &[u8; 32]) -> [u8; 12] {
    let d = hash_parts(&[b"nonce/", label, b"/", key]);
    let mut n = [0u8; 12];
    n.copy_from_slice(&d.0[..12]);
    n
}

/// Build the envelope for a plaintext under a policy. Deterministic: the
/// document key is hash(plaintext ‖ canonical policy).
pub fn seal(plaintext: &[u8], policy: &AccessPolicy, keyring: &RoleKeyring) -> Result<Envelope, DocError> {
    let doc_key = hash_parts(&[plaintext, &policy.canonical_bytes()]).0;
    let nonce = nonce_for(b"document", &doc_key);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&doc_key));
    let ciphertext = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .expect("encryption with a valid key cannot fail");

    let mut wrapped_keys = BTreeMap::new();
    for role in policy.roles() {
        let role_key = keyring.key(role)?;
        let wrap_nonce = nonce_for(role.as_str().as_bytes(), &doc_key);
        let wrapper = ChaCha20Poly1305::new(Key::from_slice(role_key));
        let mut blob = wrap_nonce.to_vec();
        blob.extend(
            wrapper
                .encrypt(Nonce::from_slice(&wrap_nonce), Payload { msg: &doc_key, aad: role.as_str().as_bytes() })
                .expect("key wrapping cannot fail"),
        );
        wrapped_keys.insert(role, hex::encode(blob));
    }
    Ok(Envelope {
        policy: policy.clone(),
        plaintext_hash: hash(plaintext),
        wrapped_keys,
        ciphertext: hex::encode(ciphertext),
        nonce: hex::encode(nonce),
    })
}

/// Decrypt an envelope as `role`, checking every integrity binding.
pub fn open(envelope: &Envelope, role: Role, keyring: &RoleKeyring) -> Result<Vec<u8>, DocError> {
    if !envelope.policy.allows(role) {
        return Err(DocError::RoleNotInPolicy);
    }
    if envelope.wrapped_keys.len() != envelope.policy.roles().count()
        || envelope.policy.roles().any(|r| !envelope.wrapped_keys.contains_key(&r))
    {
        return Err(DocError::Tampered);
    }
    let role_key = keyring.key(role)?;
    let blob = hex::decode(&envelope.wrapped_keys[&role]).map_err(|_| DocError::Tampered)?;
    if blob.len() < 12 {
        return Err(DocError::Tampered);
    }
    let (wrap_nonce, wrapped) = blob.split_at(12);
    let doc_key = ChaCha20Poly1305::new(Key::from_slice(role_key))
        .decrypt(Nonce::from_slice(wrap_nonce), Payload { msg: wrapped, aad: role.as_str().as_bytes() })
        .map_err(|_| DocError::Tampered)?;
    let doc_key: [u8; 32] = doc_key.try_into().map_err(|_| DocError::Tampered)?;
    let nonce: [u8; 12] = hex::decode(&envelope.nonce)
        .ok()
        .and_then(|n| n.try_into().ok())
        .ok_or(DocError::Tampered)?;
    let ciphertext = hex::decode(&envelope.ciphertext).map_err(|_| DocError::Tampered)?;
    let plaintext = ChaCha20Poly1305::new(Key::from_slice(&doc_key))
        .decrypt(Nonce::from_slice(&nonce), ciphertext.as_slice())
        .map_err(|_| DocError::Tampered)?;
    if hash(&plaintext) != envelope.plaintext_hash {
        return Err(DocError::Tampered);
    }
    Ok(plaintext)
}

/// Keyed blob storage: ContentId → envelope bytes.
pub trait ObjectStore: Send + Sync {
    fn put(&self, id: &ContentId, bytes: &[u8]) -> io::Result<()>;
    fn get(&self, id: &ContentId) -> io::Result<Option<Vec<u8>>>;
}

#[derive(Debug, Default)]
pub struct MemStore {
    objects: RwLock<BTreeMap<ContentId, Vec<u8>>>,
}

impl MemStore {
    pub fn new() -> MemStore {
        MemStore::default()
    }

    /// Overwrite raw bytes without any checks. Tests use it to simulate tampering.
    pub fn overwrite(&self, id: &ContentId, bytes: Vec<u8>) {
        self.objects.write().unwrap().insert(*id, bytes);
    }
}

impl ObjectStore for MemStore {
    fn put(&self, id: &ContentId, bytes: &[u8]) -> io::Result<()> {
        self.objects.write().unwrap().entry(*id).or_insert_with(|| bytes.to_vec());
        Ok(())
    }

    fn get(&self, id: &ContentId) -> io::Result<Option<Vec<u8>>> {
        Ok(self.objects.read().unwrap().get(id).cloned())
    }
}

/// One file per document, named by the hex ContentId.
#[derive(Debug, Clone)]
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<DirStore> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(DirStore { root })
    }

    pub fn path_of(&self, id: &ContentId) -> PathBuf {
        self.root.join(id.to_hex())
    }
}

impl ObjectStore for DirStore {
    fn put(&self, id: &ContentId, bytes: &[u8]) -> io::Result<()> {
        let path = self.path_of(id);
        if path.exists() {
            return Ok(());
        }
        // Write-then-rename keeps each put atomic.
        let tmp = self.root.join(format!(".{}.tmp", id.to_hex()));
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, path)
    }

    fn get(&self, id: &ContentId) -> io::Result<Option<Vec<u8>>> {
        match fs::read(self.path_of(id)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}

pub struct DocStore {
    store: Box<dyn ObjectStore>,
    keyring: RoleKeyring,
}

impl std::fmt::Debug for DocStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DocStore").field("keyring", &self.keyring).finish_non_exhaustive()
    }
}

impl DocStore {
    pub fn new(store: Box<dyn ObjectStore>, keyring: RoleKeyring) -> DocStore {
        DocStore { store, keyring }
    }

    pub fn in_memory(keyring: RoleKeyring) -> DocStore {
        DocStore::new(Box::new(MemStore::new()), keyring)
    }

    pub fn keyring(&self) -> &RoleKeyring {
        &self.keyring
    }

    pub fn put(&self, plaintext: &[u8], policy: &AccessPolicy) -> Result<ContentId, DocError> {
        let env = seal(plaintext, policy, &self.keyring)?;
        let bytes = env.to_bytes();
        let id = ContentId(hash(&bytes).0);
        self.store.put(&id, &bytes)?;
        Ok(id)
    }

    pub fn contains(&self, id: &ContentId) -> bool {
        matches!(self.store.get(id), Ok(Some(_)))
    }

    /// Fetch and verify the envelope without decrypting.
    pub fn envelope(&self, id: &ContentId) -> Result<Envelope, DocError> {
        let bytes = self.store.get(id)?.ok_or(DocError::NotFound)?;
        if hash(&bytes).0 != id.0 {
            return Err(DocError::Tampered);
        }
        serde_json::from_slice(&bytes).map_err(|_| DocError::Tampered)
    }

    /// Decrypt for an admitted requester whose role is in the policy.
    pub fn get(&self, id: &ContentId, requester: &Address, registry: &Registry) -> Result<Vec<u8>, DocError> {
        let role = match registry.admission_status(requester) {
            Ok(r) => r.role,
            Err(Denial::NotAdmitted | Denial::Revoked | Denial::RoleForbidden) => {
                return Err(DocError::NotAdmitted)
            }
        };
        let env = self.envelope(id)?;
        open(&env, role, &self.keyring)
    }

    /// Re-store a case document with the bank added to its policy. The old
    /// ContentId stays valid.
    pub fn grant_to_bank(
        &self,
        case: &GuaranteeCase,
        document: &ContentId,
        actor: &Address,
    ) -> Result<ContentId, DocError> {
        if *actor != case.cgi {
            return Err(DocError::NotCaseCgi);
        }
        if !grant_permitted(case) {
            return Err(DocError::WrongState);
        }
        let env = self.envelope(document)?;
        let base: BTreeSet<Role> = env.policy.roles().collect();
        let cgi_only = BTreeSet::from([Role::Cgi]);
        let cgi_borrower = BTreeSet::from([Role::Cgi, Role::Borrower]);
        if base != cgi_only && base != cgi_borrower {
            return Err(DocError::PolicyNotGrantable);
        }
        let plaintext = open(&env, Role::Cgi, &self.keyring)?;
        self.put(&plaintext, &env.policy.with(Role::Bank))
    }
}

/// Sharing with the bank is allowed once the guarantee has been approved.
pub fn grant_permitted(case: &GuaranteeCase) -> bool {
    case.state.is_at_or_after_approval()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_account;

    fn keyring() -> RoleKeyring {
        RoleKeyring::derive(&[42; 32])
    }

    fn registry_with(roles: &[(u8, Role)]) -> (Registry, Vec<Address>) {
        let mut reg = Registry::new();
        let mut out = vec![];
        for (seed, role) in roles {
            let a = generate_account([*seed; 32]).0;
            reg.admit(a.address, a.public_key, *role, ContentId([0; 32]), true, None, 0).unwrap();
            out.push(a.address);
        }
        (reg, out)
    }

    #[test]
    fn round_trip_for_policy_role() {
        let ds = DocStore::in_memory(keyring());
        let (reg, who) = registry_with(&[(1, Role::Cgi)]);
        let id = ds.put(b"dossier", &AccessPolicy::new([Role::Cgi]).unwrap()).unwrap();
        assert_eq!(ds.get(&id, &who[0], &reg).unwrap(), b"dossier");
    }

    #[test]
    fn identical_content_same_id() {
        let ds = DocStore::in_memory(keyring());
        let p = AccessPolicy::new([Role::Cgi, Role::Borrower]).unwrap();
        assert_eq!(ds.put(b"x", &p).unwrap(), ds.put(b"x", &p).unwrap());
        let other = AccessPolicy::new([Role::Cgi]).unwrap();
        assert_ne!(ds.put(b"x", &p).unwrap(), ds.put(b"x", &other).unwrap());
    }

    #[test]
    fn empty_policy_rejected() {
        assert!(matches!(AccessPolicy::new([]), Err(DocError::EmptyPolicy)));
        assert!(serde_json::from_str::<AccessPolicy>("[]").is_err());
    }

    #[test]
    fn missing_role_key() {
        let ds = DocStore::in_memory(keyring().without(Role::Bank));
        let err = ds.put(b"x", &AccessPolicy::new([Role::Bank]).unwrap()).unwrap_err();
        assert!(matches!(err, DocError::MissingRoleKey(Role::Bank)));
    }

    #[test]
    fn bank_denied_cgi_only_document() {
        let ds = DocStore::in_memory(keyring());
        let (reg, who) = registry_with(&[(1, Role::Cgi), (2, Role::Bank)]);
        let id = ds.put(b"financials", &AccessPolicy::new([Role::Cgi]).unwrap()).unwrap();
        assert!(matches!(ds.get(&id, &who[1], &reg), Err(DocError::RoleNotInPolicy)));
    }

    #[test]
    fn revoked_requester_denied() {
        let ds = DocStore::in_memory(keyring());
        let (mut reg, who) = registry_with(&[(1, Role::Cgi), (2, Role::GovernmentAgency)]);
        let id = ds.put(b"x", &AccessPolicy::new([Role::Cgi]).unwrap()).unwrap();
        reg.revoke(&who[0], &who[1], 4).unwrap();
        assert!(matches!(ds.get(&id, &who[0], &reg), Err(DocError::NotAdmitted)));
    }

    #[test]
    fn unknown_id_not_found() {
        let ds = DocStore::in_memory(keyring());
        let (reg, who) = registry_with(&[(1, Role::Cgi)]);
        assert!(matches!(ds.get(&ContentId([3; 32]), &who[0], &reg), Err(DocError::NotFound)));
    }

    #[test]
    fn every_single_byte_mutation_is_tampered() {
        let mem = std::sync::Arc::new(MemStore::new());
        struct Shared(std::sync::Arc<MemStore>);
        impl ObjectStore for Shared {
            fn put(&self, id: &ContentId, b: &[u8]) -> io::Result<()> {
                self.0.put(id, b)
            }
            fn get(&self, id: &ContentId) -> io::Result<Option<Vec<u8>>> {
                self.0.get(id)
            }
        }
        let ds = DocStore::new(Box::new(Shared(mem.clone())), keyring());
        let (reg, who) = registry_with(&[(1, Role::Cgi)]);
        let id = ds.put(b"kyc dossier", &AccessPolicy::new([Role::Cgi]).unwrap()).unwrap();
        let original = mem.get(&id).unwrap().unwrap();
        for i in 0..original.len() {
            let mut m = original.clone();
            m[i] ^= 0x01;
            mem.overwrite(&id, m);
            assert!(matches!(ds.get(&id, &who[0], &reg), Err(DocError::Tampered)), "byte {i}");
        }
    }

    #[test]
    fn open_detects_internal_inconsistency() {
        // An envelope whose hash was recomputed after editing still fails inside.
        let kr = keyring();
        let mut env = seal(b"abc", &AccessPolicy::new([Role::Cgi]).unwrap(), &kr).unwrap();
        env.plaintext_hash = hash(b"abd");
        assert!(matches!(open(&env, Role::Cgi, &kr), Err(DocError::Tampered)));
    }

    #[test]
    fn new_bank_reads_without_reencryption() {
        let ds = DocStore::in_memory(keyring());
        let (mut reg, who) = registry_with(&[(1, Role::Cgi)]);
        let id = ds.put(b"terms", &AccessPolicy::new([Role::Cgi, Role::Bank]).unwrap()).unwrap();
        let before = ds.envelope(&id).unwrap();
        let bank = generate_account([5; 32]).0;
        reg.admit(bank.address, bank.public_key, Role::Bank, ContentId([0; 32]), true, Some(&who[0]), 1)
            .unwrap();
        assert_eq!(ds.get(&id, &bank.address, &reg).unwrap(), b"terms");
        assert_eq!(ds.envelope(&id).unwrap(), before);
    }

    #[test]
    fn envelope_wraps_one_key_per_role() {
        let env = seal(b"x", &AccessPolicy::new([Role::Cgi, Role::Bank, Role::Borrower]).unwrap(), &keyring())
            .unwrap();
        assert_eq!(env.wrapped_keys.len(), 3);
        let json: serde_json::Value = serde_json::from_slice(&env.to_bytes()).unwrap();
        let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["ciphertext", "nonce", "plaintext_hash", "policy", "wrapped_keys"]);
    }

    #[test]
    fn dir_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = DocStore::new(Box::new(DirStore::open(dir.path()).unwrap()), keyring());
        let (reg, who) = registry_with(&[(1, Role::Cgi)]);
        let id = ds.put(b"on disk", &AccessPolicy::new([Role::Cgi]).unwrap()).unwrap();
        assert!(dir.path().join(id.to_hex()).exists());
        assert_eq!(ds.get(&id, &who[0], &reg).unwrap(), b"on disk");
    }
}
