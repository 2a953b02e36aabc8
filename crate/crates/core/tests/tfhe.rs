use fhevolve::modring::{centered, sub_mod, RingPoly};
use fhevolve::params::TfheParams;
use fhevolve::rng::seeded;
use fhevolve::tfhe::*;
use fhevolve::variants::{Genome, ReferenceKernel};

fn toy() -> TfheParams {
    TfheParams::toy()
}

#[test]
fn keygen_is_deterministic() {
    let p = toy();
    let (a1, b1, k1) = keygen(&p, 11);
    let (a2, b2, k2) = keygen(&p, 11);
    assert_eq!(a1, a2);
    assert_eq!(b1, b2);
    assert_eq!(k1, k2);
    let (a3, _, _) = keygen(&p, 12);
    assert_ne!(k1.bsk[0], keygen(&p, 12).2.bsk[0]);
    assert!(a3.0.iter().all(|&b| b < 2));
}

#[test]
fn noiseless_bsk_rows_hold_gadget_multiples() {
    let p = toy().noiseless();
    let (lwe, rlwe, keys) = keygen(&p, 1);
    let levels = p.decomp_levels as usize;
    for (bit, g) in lwe.0.iter().zip(&keys.bsk) {
        assert_eq!(g.rows.len(), 2 * levels);
        for (r, row) in g.rows.iter().enumerate() {
            let phase = rlwe_phase(row, &rlwe).unwrap();
            let w = gadget_weight(&p, r % levels) * bit;
            // Body rows carry +mu*g; mask rows carry -mu*g*s.
            let want = if r >= levels {
                RingPoly::constant(p.ring, w)
            } else {
                rlwe.0.scalar_mul(w).neg()
            };
            assert_eq!(phase, want);
        }
    }
}

#[test]
fn lwe_round_trip_noiseless_and_noisy() {
    for p in [toy().noiseless(), toy()] {
        let (s, _, _) = keygen(&p, 2);
        for m in 0..8 {
            let ct = lwe_encrypt(m, &s, &p, 100 + m).unwrap();
            assert_eq!(lwe_decrypt(&ct, &s, &p).unwrap(), m);
        }
    }
    let p = toy();
    assert!(lwe_encrypt(8, &LweSecret(vec![0; 16]), &p, 0).is_err());
}

#[test]
fn zero_ciphertext_with_zero_secret_decrypts_to_zero() {
    let p = toy();
    let ct = LweCiphertext::zero(p.lwe_dim);
    // The all-zero sample has phase 0, which lies on the lower edge of slot 0.
    assert_eq!(
        lwe_decrypt(&ct, &LweSecret(vec![0; p.lwe_dim]), &p).unwrap(),
        0
    );
}

#[test]
fn homomorphic_addition() {
    let p = toy();
    let (s, _, _) = keygen(&p, 3);
    for m1 in 0..8 {
        for m2 in 0..8 {
            let a = lwe_encrypt(m1, &s, &p, m1 * 8 + m2).unwrap();
            let b = lwe_encrypt(m2, &s, &p, 1000 + m1 * 8 + m2).unwrap();
            let sum = lwe_add(&a, &b, &p).unwrap();
            assert_eq!(lwe_decrypt(&sum, &s, &p).unwrap(), (m1 + m2) % 8);
        }
    }
}

#[test]
fn decomposition_round_trip_when_exact() {
    let p = toy();
    let mut rng = seeded(4);
    for _ in 0..50 {
        let c: Vec<u64> = (0..p.n())
            .map(|_| rand::Rng::random_range(&mut rng, 0..p.q()))
            .collect();
        let poly = RingPoly::new(p.ring, c).unwrap();
        let digits = gadget_decompose(&poly, &p);
        assert!(digits
            .iter()
            .all(|d| d.coeffs().iter().all(|&x| x < 1 << p.decomp_base_log)));
        assert_eq!(gadget_recompose(&digits, &p), poly);
    }
    let zero = RingPoly::zero(p.ring);
    assert!(gadget_decompose(&zero, &p).iter().all(|d| d.is_zero()));
}

#[test]
fn external_product_through_genomes() {
    let p = toy().noiseless();
    let (_, s, _) = keygen(&p, 5);
    let mut rng = seeded(6);
    let msg = RingPoly::new(p.ring, (0..p.n() as u64).map(|i| i * 0x0101_0101).collect()).unwrap();
    let c = rlwe_encrypt(&msg, &s, 0.0, &mut rng).unwrap();
    let one = rgsw_encrypt(1, &s, &p, &mut rng).unwrap();
    let zero = rgsw_encrypt(0, &s, &p, &mut rng).unwrap();
    let g = Genome {
        unroll_factor: 8,
        tile_split: 2,
        lane_width_bits: 16,
        elide_cast: true,
        ..Genome::reference()
    };
    let out = external_product(&one, &c, &p, g).unwrap();
    assert_eq!(rlwe_phase(&out, &s).unwrap(), msg);
    assert_eq!(
        out,
        external_product(&one, &c, &p, Genome::reference()).unwrap()
    );
    let out = external_product(&zero, &c, &p, g).unwrap();
    assert!(rlwe_phase(&out, &s).unwrap().is_zero());
}

#[test]
fn blind_rotate_without_rotation_returns_test_poly() {
    let p = toy().noiseless();
    let (_, s, keys) = keygen(&p, 7);
    let lut = Lut::from_fn(&p, |m| (m * 3) % 8).unwrap();
    let ct = LweCiphertext::zero(p.lwe_dim);
    let acc = blind_rotate(&lut, &ct, &keys, &p, Genome::reference()).unwrap();
    assert_eq!(rlwe_phase(&acc, &s).unwrap(), lut.test_poly);
}

#[test]
fn blind_rotate_reads_table_for_every_message() {
    let p = toy().noiseless();
    let (lwe, rlwe, keys) = keygen(&p, 8);
    let lut = Lut::from_fn(&p, |m| 7 - m).unwrap();
    for m in 0..8 {
        let ct = lwe_encrypt(m, &lwe, &p, m).unwrap();
        let acc = blind_rotate(&lut, &ct, &keys, &p, Genome::reference()).unwrap();
        let c0 = rlwe_phase(&acc, &rlwe).unwrap().coeffs()[0];
        assert_eq!(decode(c0, &p), 7 - m, "m={m}");
        let extracted = sample_extract(&acc, 0).unwrap();
        assert_eq!(lwe_decrypt(&extracted, &rlwe.as_lwe(), &p).unwrap(), 7 - m);
    }
}

#[test]
fn unroll_does_not_change_ciphertext() {
    let p = toy();
    let (lwe, _, keys) = keygen(&p, 9);
    let lut = Lut::identity(&p);
    let ct = lwe_encrypt(5, &lwe, &p, 1).unwrap();
    let a = blind_rotate(&lut, &ct, &keys, &p, Genome::reference()).unwrap();
    for u in [2, 4, 8] {
        let g = Genome {
            unroll_factor: u,
            ..Genome::reference()
        };
        assert_eq!(a, blind_rotate(&lut, &ct, &keys, &p, g).unwrap());
    }
    // An unroll factor that does not divide the trip count uses the tail.
    assert_eq!(
        a,
        blind_rotate_with(&lut, &ct, &keys, &p, &ReferenceKernel, 3).unwrap()
    );
}

#[test]
fn bootstrap_identity_and_and() {
    let p = toy();
    let (lwe, _, keys) = keygen(&p, 10);
    let id = Lut::identity(&p);
    let and_top = Lut::from_fn(&p, |m| (m >> 2) & (m >> 1) & 1).unwrap();
    for m in 0..8 {
        let ct = lwe_encrypt(m, &lwe, &p, 50 + m).unwrap();
        let out = bootstrap(&ct, &id, &keys, &p, Genome::reference()).unwrap();
        assert_eq!(out.dim(), p.lwe_dim);
        assert_eq!(lwe_decrypt(&out, &lwe, &p).unwrap(), m);
        let out = bootstrap(&ct, &and_top, &keys, &p, Genome::reference()).unwrap();
        assert_eq!(
            lwe_decrypt(&out, &lwe, &p).unwrap(),
            (m >> 2) & (m >> 1) & 1
        );
    }
}

#[test]
fn chained_bootstraps_stay_correct() {
    let p = toy();
    let (lwe, _, keys) = keygen(&p, 11);
    let inc = Lut::from_fn(&p, |m| (m + 1) % 8).unwrap();
    let dbl = Lut::from_fn(&p, |m| (2 * m) % 8).unwrap();
    for m in 0..8 {
        let ct = lwe_encrypt(m, &lwe, &p, 70 + m).unwrap();
        let once = bootstrap(&ct, &inc, &keys, &p, Genome::reference()).unwrap();
        let twice = bootstrap(&once, &dbl, &keys, &p, Genome::reference()).unwrap();
        assert_eq!(lwe_decrypt(&twice, &lwe, &p).unwrap(), (2 * (m + 1)) % 8);
    }
}

#[test]
fn bootstrap_output_noise_is_small() {
    let p = toy();
    let (lwe, _, keys) = keygen(&p, 12);
    let lut = Lut::identity(&p);
    let slot = p.q() >> (p.plaintext_bits + 1);
    for m in 0..8 {
        let ct = lwe_encrypt(m, &lwe, &p, m).unwrap();
        let out = bootstrap(&ct, &lut, &keys, &p, Genome::reference()).unwrap();
        let phase = lwe_phase(&out, &lwe, p.q()).unwrap();
        let err = centered(sub_mod(phase, encode(m, &p).unwrap(), p.q()), p.q());
        assert!(err.unsigned_abs() < slot / 16, "err {err}");
    }
}

#[test]
fn dimension_errors() {
    let p = toy();
    let (_, _, keys) = keygen(&p, 13);
    let lut = Lut::identity(&p);
    let bad = LweCiphertext::zero(p.lwe_dim + 1);
    assert!(matches!(
        blind_rotate(&lut, &bad, &keys, &p, Genome::reference()),
        Err(TfheError::Dimension { .. })
    ));
    assert!(key_switch(&bad, &keys.ksk, &p).is_err());
    assert!(Lut::new(&[0, 1, 2], &p).is_err());
}
