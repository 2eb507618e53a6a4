//! Remote-attestation-style key transfer.
//!
//! Message sequence: init → msg0 (EPID) → msg1 (server DH public) →
//! msg2 (client DH public + MAC) → msg3 (quote) → attestation result
//! carrying the master key, encrypted under the derived session key. The
//! enclave then derives per-column keys internally. Server-originated
//! messages are signed with a pinned deployment key and the quote is
//! checked by a stub verifier keyed with a test key, so any single-bit
//! tamper of any frame fails the session closed.

use std::collections::HashSet;

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce};
use hmac::{Hmac, Mac};
use rand::{Rng, RngCore};
use sha2::Sha256;
use thiserror::Error;

use crate::crypto::{derive_column_key, modp, MasterKey, Scheme};
use crate::wire::{Reader, Writer};

use super::state::EnclaveState;

type HmacSha256 = Hmac<Sha256>;

const FRAME_VERSION: u8 = 1;
const DH_GENERATOR: u128 = 5;

/// Pinned deployment signing key, fixed at provisioning time; stands in for
/// the predefined server public key that guards against man-in-the-middle.
const SERVER_SIGNING_KEY: &[u8] = b"cipherdb/pinned-server-signing-key/v1";
/// Key the stub quote verifier accepts.
const QUOTE_TEST_KEY: &[u8] = b"cipherdb/quote-test-key/v1";

const TYPE_INIT: u8 = 0;
const TYPE_MSG0: u8 = 1;
const TYPE_MSG0_ACK: u8 = 2;
const TYPE_MSG1: u8 = 3;
const TYPE_MSG2: u8 = 4;
const TYPE_MSG3: u8 = 5;
const TYPE_RESULT: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    Msg0,
    Msg1,
    Msg2,
    Msg3,
    Attested,
    Failed,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AttestError {
    #[error("unexpected or malformed frame")]
    UnexpectedFrame,
    #[error("server signature verification failed")]
    BadSignature,
    #[error("mac verification failed")]
    BadMac,
    #[error("quote rejected")]
    BadQuote,
    #[error("epid already registered")]
    EpidReplay,
    #[error("payload authentication failed")]
    AuthFailure,
}

fn hmac(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("any key length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

fn derive_session_keys(dh_key: u128) -> ([u8; 32], [u8; 32], [u8; 32]) {
    let dh = dh_key.to_le_bytes();
    (
        hmac(&dh, &[b"MK"]),
        hmac(&dh, &[b"SK"]),
        hmac(&dh, &[b"VK"]),
    )
}

/// Column listing shipped to the enclave so it can derive per-column keys.
pub type ColumnListing = Vec<(Vec<u8>, Vec<Scheme>)>;

/// Client half of the protocol. Holds the master key, the column listing,
/// and the persistent EPID registry used to refuse replayed servers.
pub struct AttestClient {
    master: MasterKey,
    columns: ColumnListing,
    registered_epids: HashSet<[u8; 16]>,
    pub phase: Phase,
    sk: Option<[u8; 32]>,
}

impl AttestClient {
    pub fn new(master: MasterKey, columns: ColumnListing) -> AttestClient {
        AttestClient {
            master,
            columns,
            registered_epids: HashSet::new(),
            phase: Phase::Init,
            sk: None,
        }
    }

    /// Resets per-session state while keeping the EPID registry.
    pub fn reset_session(&mut self) {
        self.phase = Phase::Init;
        self.sk = None;
    }

    pub fn session_key(&self) -> Option<[u8; 32]> {
        self.sk
    }
}

/// Enclave-side per-session secrets.
struct EnclaveSession {
    epid: [u8; 16],
    dh_secret: u128,
    ga: u128,
    mk: Option<[u8; 32]>,
    sk: Option<[u8; 32]>,
    vk: Option<[u8; 32]>,
}

#[derive(Debug)]
pub struct AttestOutcome {
    pub client_sk: [u8; 32],
    pub enclave_sk: [u8; 32],
    pub provisioned_columns: usize,
}

fn frame(msg_type: u8, payload: &[u8]) -> Vec<u8> {
    let mut w = Writer::new(FRAME_VERSION);
    w.u8(msg_type);
    w.bytes(payload);
    w.finish()
}

fn parse_frame(buf: &[u8], expect_type: u8) -> Result<Vec<u8>, AttestError> {
    let mut r = Reader::new(buf, FRAME_VERSION).map_err(|_| AttestError::UnexpectedFrame)?;
    if r.u8().map_err(|_| AttestError::UnexpectedFrame)? != expect_type {
        return Err(AttestError::UnexpectedFrame);
    }
    let payload = r.bytes().map_err(|_| AttestError::UnexpectedFrame)?.to_vec();
    r.done().map_err(|_| AttestError::UnexpectedFrame)?;
    Ok(payload)
}

fn sign(parts: &[&[u8]]) -> [u8; 32] {
    hmac(SERVER_SIGNING_KEY, parts)
}

fn encode_payload(master: &MasterKey, columns: &ColumnListing) -> Vec<u8> {
    let mut w = Writer::new(1);
    w.raw(master.as_bytes());
    w.u32(columns.len() as u32);
    for (label, schemes) in columns {
        w.bytes(label);
        w.u32(schemes.len() as u32);
        for s in schemes {
            w.u8(s.tag());
        }
    }
    w.finish()
}

fn decode_payload(buf: &[u8]) -> Result<(MasterKey, ColumnListing), AttestError> {
    let mut r = Reader::new(buf, 1).map_err(|_| AttestError::UnexpectedFrame)?;
    let master: [u8; 32] = r
        .raw(32)
        .map_err(|_| AttestError::UnexpectedFrame)?
        .try_into()
        .unwrap();
    let count = r.u32().map_err(|_| AttestError::UnexpectedFrame)? as usize;
    let mut columns = Vec::with_capacity(count);
    for _ in 0..count {
        let label = r.bytes().map_err(|_| AttestError::UnexpectedFrame)?.to_vec();
        let scheme_count = r.u32().map_err(|_| AttestError::UnexpectedFrame)? as usize;
        let mut schemes = Vec::with_capacity(scheme_count);
        for _ in 0..scheme_count {
            let tag = r.u8().map_err(|_| AttestError::UnexpectedFrame)?;
            schemes.push(Scheme::from_tag(tag).ok_or(AttestError::UnexpectedFrame)?);
        }
        columns.push((label, schemes));
    }
    r.done().map_err(|_| AttestError::UnexpectedFrame)?;
    Ok((MasterKey::from_bytes(master), columns))
}

/// Runs the full protocol over an in-process channel. `tamper` sees every
/// frame (with its index in the exchange) and may alter it; the honest
/// transport is the identity.
pub fn attest_and_provision(
    client: &mut AttestClient,
    state: &mut EnclaveState,
    mut tamper: impl FnMut(usize, Vec<u8>) -> Vec<u8>,
) -> Result<AttestOutcome, AttestError> {
    let result = run_protocol(client, state, &mut tamper);
    if result.is_err() {
        client.phase = Phase::Failed;
        client.sk = None;
        state.keys.clear();
        state.session_sk = None;
    }
    result
}

fn run_protocol(
    client: &mut AttestClient,
    state: &mut EnclaveState,
    tamper: &mut impl FnMut(usize, Vec<u8>) -> Vec<u8>,
) -> Result<AttestOutcome, AttestError> {
    client.phase = Phase::Init;
    let mut frame_idx = 0;
    let mut send = |f: Vec<u8>| {
        let out = tamper(frame_idx, f);
        frame_idx += 1;
        out
    };

    // init: client opens the exchange.
    let init = send(frame(TYPE_INIT, &[]));
    parse_frame(&init, TYPE_INIT)?;

    // msg0: server EPID, signed with the pinned key.
    let mut epid = [0u8; 16];
    state.rng.fill_bytes(&mut epid);
    let epid_sig = sign(&[b"msg0", &epid]);
    let mut p = Vec::new();
    p.extend_from_slice(&epid);
    p.extend_from_slice(&epid_sig);
    let msg0 = send(frame(TYPE_MSG0, &p));

    let payload = parse_frame(&msg0, TYPE_MSG0)?;
    if payload.len() != 48 {
        return Err(AttestError::UnexpectedFrame);
    }
    let seen_epid: [u8; 16] = payload[..16].try_into().unwrap();
    if sign(&[b"msg0", &seen_epid])[..] != payload[16..] {
        return Err(AttestError::BadSignature);
    }
    // Replayed EPID terminates the process.
    if !client.registered_epids.insert(seen_epid) {
        return Err(AttestError::EpidReplay);
    }
    client.phase = Phase::Msg0;

    // msg0 ack.
    let ack = send(frame(TYPE_MSG0_ACK, &[]));
    parse_frame(&ack, TYPE_MSG0_ACK)?;

    // msg1: server DH public key Ga, signed.
    let dh_secret = modp::reduce(((state.rng.gen::<u64>() as u128) << 64) | state.rng.gen::<u64>() as u128).max(2);
    let ga = modp::pow_mod(DH_GENERATOR, dh_secret);
    let mut session = EnclaveSession {
        epid,
        dh_secret,
        ga,
        mk: None,
        sk: None,
        vk: None,
    };
    let ga_bytes = ga.to_le_bytes();
    let ga_sig = sign(&[b"msg1", &ga_bytes]);
    let mut p = Vec::new();
    p.extend_from_slice(&ga_bytes);
    p.extend_from_slice(&ga_sig);
    let msg1 = send(frame(TYPE_MSG1, &p));

    let payload = parse_frame(&msg1, TYPE_MSG1)?;
    if payload.len() != 48 {
        return Err(AttestError::UnexpectedFrame);
    }
    let ga_seen = u128::from_le_bytes(payload[..16].try_into().unwrap());
    if sign(&[b"msg1", &payload[..16]])[..] != payload[16..] {
        return Err(AttestError::BadSignature);
    }
    client.phase = Phase::Msg1;

    // Client DH half and session key chain.
    let mut client_rng_seed = [0u8; 16];
    // Client-side ephemeral secret, derived from its master key and the
    // server half so the exchange stays deterministic per session.
    client_rng_seed.copy_from_slice(&hmac(client.master.as_bytes(), &[b"dh", &payload[..16], &seen_epid])[..16]);
    let gb_secret = modp::reduce(u128::from_le_bytes(client_rng_seed)).max(2);
    let gb = modp::pow_mod(DH_GENERATOR, gb_secret);
    let dh_key_client = modp::pow_mod(ga_seen, gb_secret);
    let (mk_c, sk_c, vk_c) = derive_session_keys(dh_key_client);

    // msg2: Gb plus MAC under MK.
    let gb_bytes = gb.to_le_bytes();
    let cmac = hmac(&mk_c, &[b"msg2", &gb_bytes]);
    let mut p = Vec::new();
    p.extend_from_slice(&gb_bytes);
    p.extend_from_slice(&cmac);
    let msg2 = send(frame(TYPE_MSG2, &p));

    let payload = parse_frame(&msg2, TYPE_MSG2)?;
    if payload.len() != 48 {
        return Err(AttestError::UnexpectedFrame);
    }
    let gb_seen = u128::from_le_bytes(payload[..16].try_into().unwrap());
    let dh_key_enclave = modp::pow_mod(modp::reduce(gb_seen), session.dh_secret);
    let (mk_e, sk_e, vk_e) = derive_session_keys(dh_key_enclave);
    if hmac(&mk_e, &[b"msg2", &payload[..16]])[..] != payload[16..] {
        return Err(AttestError::BadMac);
    }
    session.mk = Some(mk_e);
    session.sk = Some(sk_e);
    session.vk = Some(vk_e);
    client.phase = Phase::Msg2;

    // msg3: quote over Ga + Gb + VK, checked by the stub verifier.
    let quote = hmac(
        QUOTE_TEST_KEY,
        &[
            b"quote",
            &session.epid,
            &session.ga.to_le_bytes(),
            &gb_seen.to_le_bytes(),
            &vk_e,
        ],
    );
    let mut p = Vec::new();
    p.extend_from_slice(&session.ga.to_le_bytes());
    p.extend_from_slice(&quote);
    let msg3 = send(frame(TYPE_MSG3, &p));

    let payload = parse_frame(&msg3, TYPE_MSG3)?;
    if payload.len() != 48 {
        return Err(AttestError::UnexpectedFrame);
    }
    // Ga echoed in msg3 must match the client's copy from msg1.
    if payload[..16] != ga_seen.to_le_bytes() {
        return Err(AttestError::BadQuote);
    }
    let expected_quote = hmac(
        QUOTE_TEST_KEY,
        &[b"quote", &seen_epid, &payload[..16], &gb_bytes, &vk_c],
    );
    if expected_quote[..] != payload[16..] {
        return Err(AttestError::BadQuote);
    }
    client.phase = Phase::Msg3;
    client.sk = Some(sk_c);

    // Attestation result: master key + column listing under SK (AES-GCM;
    // the tag is the checkcode).
    let plain = encode_payload(&client.master, &client.columns);
    let cipher = Aes256Gcm::new_from_slice(&sk_c).unwrap();
    let nonce_bytes = [0x24u8; 12]; // single use per session key
    let sealed = cipher
        .encrypt(Nonce::from_slice(&nonce_bytes), plain.as_slice())
        .map_err(|_| AttestError::AuthFailure)?;
    let result_msg = send(frame(TYPE_RESULT, &sealed));

    let payload = parse_frame(&result_msg, TYPE_RESULT)?;
    let cipher_e = Aes256Gcm::new_from_slice(session.sk.as_ref().unwrap()).unwrap();
    let plain_e = cipher_e
        .decrypt(Nonce::from_slice(&nonce_bytes), payload.as_slice())
        .map_err(|_| AttestError::AuthFailure)?;
    let (master, columns) = decode_payload(&plain_e)?;

    // Inside the enclave: derive one key per (column, scheme).
    let mut provisioned = 0;
    for (label, schemes) in &columns {
        for &scheme in schemes {
            let key = derive_column_key(&master, label, scheme)
                .map_err(|_| AttestError::UnexpectedFrame)?;
            state.install_key(key);
            provisioned += 1;
        }
    }
    state.session_sk = session.sk;
    client.phase = Phase::Attested;

    Ok(AttestOutcome {
        client_sk: sk_c,
        enclave_sk: session.sk.unwrap(),
        provisioned_columns: provisioned,
    })
}
