//! Public-API round trips: keys on disk, party servers over sockets, and
//! a big-integer check of the signing equation.

use std::sync::Arc;

use num_bigint::BigUint;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use esem_core::group::GROUP_ORDER_LE;
use esem_core::kdf::h2_challenge;
use esem_core::keystore::FileSigner;
use esem_core::protocol::{PartyClient, PartyServer, ServerHandle, ShareStore};
use esem_core::scheme::LocalParties;
use esem_core::{keygen, snod, verify, verify_bytes, OpCounter, PartyShare, SigningKey, SnodParams, Verdict};

fn toy(v: u16, n: u32, l: u8) -> SnodParams {
    SnodParams::toy(v, n, l).unwrap()
}

fn servers_for(shares: &[PartyShare], dir: &std::path::Path) -> Vec<ServerHandle> {
    shares
        .iter()
        .enumerate()
        .map(|(j, share)| {
            let party_dir = dir.join(format!("p{}", j + 1));
            std::fs::create_dir_all(&party_dir).unwrap();
            ShareStore::open(&party_dir).unwrap().insert(share.clone()).unwrap();
            // Reload from disk so the persisted form is what gets served.
            let store = Arc::new(ShareStore::open(&party_dir).unwrap());
            PartyServer::bind("127.0.0.1:0", store).unwrap().spawn().unwrap()
        })
        .collect()
}

#[test]
fn signing_equation_holds_over_the_integers() {
    let q = BigUint::from_bytes_le(&GROUP_ORDER_LE);
    let mut rng = StdRng::seed_from_u64(3);
    let mut ops = OpCounter::new();
    let (sk, _, _) = keygen(&SnodParams::ESEM, &mut rng, &mut ops);
    let y = BigUint::from_bytes_le(&sk.secret().to_bytes());
    for counter in [0u64, 1, 77, u64::MAX - 1] {
        let m = counter.to_be_bytes();
        let sig = sk.sign_at(counter, &m, &mut ops);
        let (r, x) = snod::sender(sk.secret(), counter, &SnodParams::ESEM, &mut ops);
        assert_eq!(sig.x, x);
        let s = BigUint::from_bytes_le(&sig.s.to_bytes());
        let e = BigUint::from_bytes_le(&h2_challenge(&m, &x, &mut ops).to_bytes());
        let r = BigUint::from_bytes_le(&r.to_bytes());
        assert!(s < q);
        assert_eq!((s + e * &y) % &q, r);
    }
}

#[test]
fn key_file_signatures_verify_over_sockets() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = StdRng::seed_from_u64(5);
    let mut ops = OpCounter::new();
    let (sk, pk, shares) = keygen(&toy(6, 64, 3), &mut rng, &mut ops);
    let key_path = dir.path().join("k.key");
    FileSigner::create(&key_path, &sk, false).unwrap();

    let servers = servers_for(&shares, dir.path());
    let client = PartyClient::new(servers.iter().map(|s| s.addr().to_string()).collect());

    let mut sigs = Vec::new();
    {
        let mut signer = FileSigner::open(&key_path).unwrap();
        for m in [&b"first"[..], b"second"] {
            sigs.push((m, signer.sign(m, &mut ops).unwrap()));
        }
    }
    let reopened = FileSigner::open(&key_path).unwrap();
    assert_eq!(reopened.key().counter(), 2);
    assert_ne!(sigs[0].1.x, sigs[1].1.x);

    for (m, sig) in &sigs {
        assert_eq!(verify(m, sig, &pk, &client, &mut ops), Verdict::Accept);
        assert_eq!(verify(b"other", sig, &pk, &client, &mut ops), Verdict::Reject);
    }
}

#[test]
fn stopped_server_is_unavailable_not_reject() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = StdRng::seed_from_u64(6);
    let mut ops = OpCounter::new();
    let (mut sk, pk, shares) = keygen(&toy(6, 64, 3), &mut rng, &mut ops);
    let sig = sk.sign(b"m", &mut ops).unwrap();

    let mut servers = servers_for(&shares, dir.path());
    let endpoints: Vec<String> = servers.iter().map(|s| s.addr().to_string()).collect();
    drop(servers.remove(2));
    let client = PartyClient::new(endpoints).with_retries(0);
    match verify(b"m", &sig, &pk, &client, &mut ops) {
        Verdict::Unavailable(why) => assert!(why.contains("party 3"), "{why}"),
        other => panic!("expected unavailable, got {other:?}"),
    }
    // A forged signature is still only unavailable: nothing is judged without R.
    assert!(matches!(
        verify_bytes(b"m", &[0u8; 48], &pk, &client, &mut ops),
        Verdict::Unavailable(_)
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn toy_instances_are_complete_and_modes_agree(
        seed in any::<u64>(),
        v in 3u16..8,
        log_n in 4u32..7,
        l in 1u8..5,
        counter in any::<u64>(),
        m in proptest::collection::vec(any::<u8>(), 0..64),
    ) {
        let params = toy(v, 1 << log_n, l);
        let mut rng = StdRng::seed_from_u64(seed);
        let mut ops = OpCounter::new();
        let (sk, pk, shares) = keygen(&params, &mut rng, &mut ops);
        let parties = LocalParties::complete(shares.clone());

        let sig = sk.sign_at(counter, &m, &mut ops);
        prop_assert_eq!(verify(&m, &sig, &pk, &parties, &mut ops), Verdict::Accept);

        let cached = sk.clone().expand(&mut ops);
        prop_assert_eq!(cached.sign_at(counter, &m, &mut ops), sig);

        let restored = SigningKey::from_bytes(&cached.to_bytes()).unwrap();
        prop_assert_eq!(restored.sign_at(counter, &m, &mut ops), sig);

        if l > 1 {
            let partial = LocalParties::new(shares[1..].to_vec(), l as usize);
            prop_assert!(matches!(verify(&m, &sig, &pk, &partial, &mut ops), Verdict::Unavailable(_)));
        }
    }
}
