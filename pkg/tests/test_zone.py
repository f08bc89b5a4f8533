"""Zone parsing, denial chains, signing, and authoritative answers."""

from importlib import resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dnssecsim.crypto import ContractViolation, NSEC3Params, keygen, nsec3_hash, verify
from dnssecsim.names import (
    Query,
    Rcode,
    RecordType,
    parse_name,
)
from dnssecsim.zone import (
    Zone,
    ZoneParseError,
    answer_query,
    build_mixed_chain,
    build_nsec_chain,
    build_nsec3_chain,
    dnskey_digest,
    ds_for,
    load_zone,
    rrset_message,
    sign_zone,
    strip_denial,
)

EXAMPLE_OWNERS = [
    "example",
    "a.example",
    "ai.example",
    "b.example",
    "ns.example",
    "*.w.example",
    "x.w.example",
    "x.y.w.example",
    "xx.example",
]


def fixture_text(name):
    return (resources.files("dnssecsim") / "fixtures" / name).read_text()


def make_zone(names, apex="example", rtype="A"):
    lines = ["%s %s ip-%d" % (n, rtype, i) for i, n in enumerate(names)]
    return load_zone("\n".join(lines), apex=parse_name(apex))


def signed_example_zone():
    z = load_zone(fixture_text("example.zone"))
    strip_denial(z)
    build_nsec_chain(z)
    sign_zone(z, keygen("ZSK", 8, "zsk-example"), keygen("KSK", 8, "ksk-example"))
    return z


class TestLoadZone:
    def test_example_owner_census(self):
        z = load_zone(fixture_text("example.zone"))
        assert [n.text() for n in z.owner_names()] == EXAMPLE_OWNERS
        assert z.apex == parse_name("example")

    def test_all_fixture_zones_parse(self):
        for name, apex in (("root.zone", "."), ("example.zone", None),
                           ("a-example.zone", None), ("b-example.zone", None),
                           ("mixed.zone", None)):
            z = load_zone(fixture_text(name),
                          apex=parse_name(apex) if apex else None)
            assert z.rrsets

    def test_root_zone_delegation(self):
        z = load_zone(fixture_text("root.zone"), apex=parse_name("."))
        example = parse_name("example")
        assert z.apex.is_root
        ns, ds = z.delegations[example]
        assert ns[0].rdata.host == parse_name("ns.example")
        assert ds[0].rdata.algorithm == 5

    def test_fixture_nsec_pointers_are_sorted_successors(self):
        # the NSEC next-pointers written in the fixture are exactly the
        # canonical successors of the owner census (wrapping at the end)
        z = load_zone(fixture_text("example.zone"))
        order = oracles.canonical_order(EXAMPLE_OWNERS)
        succ = {order[i]: order[(i + 1) % len(order)]
                for i in range(len(order))}
        nsec_links = {owner.text(): recs[0].rdata.next_name.text()
                      for (owner, rtype), recs in z.rrsets.items()
                      if rtype is RecordType.NSEC}
        assert nsec_links  # the fixture carries a partial chain
        for owner, nxt in nsec_links.items():
            assert succ[owner] == nxt

    def test_delegation_boundary_nsec_lives_in_child_fixture(self):
        # a.example's NSEC is written in the child zone file and its next
        # pointer continues the parent's canonical chain
        za = load_zone(fixture_text("a-example.zone"))
        nsec = za.get_rrset(parse_name("a.example"), RecordType.NSEC)
        assert nsec[0].rdata.next_name == parse_name("ai.example")

    def test_singleton_zone(self):
        z = load_zone("example A ip-1")
        assert z.apex == parse_name("example")
        assert len(z.owner_names()) == 1

    def test_unknown_type_rejected(self):
        with pytest.raises(ZoneParseError):
            load_zone("example TXT hello")

    def test_out_of_zone_owner_rejected(self):
        with pytest.raises(ZoneParseError):
            load_zone("other.test A ip-1", apex=parse_name("example"))

    def test_short_line_rejected(self):
        with pytest.raises(ZoneParseError):
            load_zone("example")

    def test_empty_zone_rejected(self):
        with pytest.raises(ZoneParseError):
            load_zone("// nothing here\n")

    def test_rrsig_annotations_parse(self):
        z = load_zone(fixture_text("example.zone"))
        sigs = z.sigs_covering(parse_name("x.y.w.example"), RecordType.MX)
        assert len(sigs) == 1
        assert sigs[0].rdata.label_count == 4
        assert sigs[0].rdata.signer == parse_name("example")

    def test_mixed_zone_fixture_records(self):
        z = load_zone(fixture_text("mixed.zone"))
        assert [n.text() for n in z.owner_names()] == [
            "example", "a.example", "b.example", "c.example"]
        n3 = z.get_rrset(parse_name("b.example"), RecordType.NSEC3)
        assert n3[0].rdata.next_hashed == "hash-of-example"
        assert n3[0].rdata.params == NSEC3Params(1, 0, "salt")
        c_nsec = z.get_rrset(parse_name("c.example"), RecordType.NSEC)
        assert c_nsec[0].rdata.next_name == parse_name("example")


NAME_SETS = st.sets(
    st.sampled_from(["example", "a.example", "b.example", "c.example",
                     "d.example", "m.example", "z.example", "q.m.example",
                     "w.m.example", "deep.q.m.example"]),
    min_size=1, max_size=7)


class TestNsecChain:
    def test_mixed_scenario_name_set(self):
        z = make_zone(["example", "a.example", "b.example", "c.example"])
        build_nsec_chain(z)
        links = {o.text(): z.get_rrset(o, RecordType.NSEC)[0].rdata.next_name.text()
                 for o in z.owner_names()}
        assert links == {"a.example": "b.example", "b.example": "c.example",
                         "c.example": "example", "example": "a.example"}

    def test_single_owner_self_loop(self):
        z = make_zone(["example"])
        build_nsec_chain(z)
        rec = z.get_rrset(parse_name("example"), RecordType.NSEC)[0]
        assert rec.rdata.next_name == parse_name("example")

    def test_bitmap_contains_present_types_plus_denial(self):
        z = make_zone(["example", "a.example"])
        build_nsec_chain(z)
        rec = z.get_rrset(parse_name("a.example"), RecordType.NSEC)[0]
        assert set(rec.rdata.types) == {RecordType.A, RecordType.NSEC,
                                        RecordType.RRSIG}

    @settings(max_examples=60)
    @given(NAME_SETS)
    def test_random_zone_matches_sort_oracle(self, names):
        z = make_zone(sorted(names))
        build_nsec_chain(z)
        links = {o.text(): z.get_rrset(o, RecordType.NSEC)[0].rdata.next_name.text()
                 for o in z.owner_names()}
        order = oracles.canonical_order([o.text() for o in z.owner_names()])
        assert links == {order[i]: order[(i + 1) % len(order)]
                         for i in range(len(order))}
        assert oracles.check_chain_cycle(links)
        assert oracles.chain_denies_existing_name(links, order) == []


class TestNsec3Chain:
    PARAMS = NSEC3Params(1, 0, "chain-salt")

    def test_single_owner_self_loop(self):
        z = make_zone(["example"])
        build_nsec3_chain(z, self.PARAMS)
        h = nsec3_hash(parse_name("example"), self.PARAMS)
        rec = z.get_rrset(z._hashed_owner(h), RecordType.NSEC3)[0]
        assert rec.rdata.next_hashed == h

    def test_covers_empty_non_terminals(self):
        z = make_zone(["example", "deep.q.m.example"])
        build_nsec3_chain(z, self.PARAMS)
        hashed = set(z.nsec3_preimages.values())
        assert parse_name("q.m.example") in hashed
        assert parse_name("m.example") in hashed

    @settings(max_examples=60)
    @given(NAME_SETS)
    def test_random_zone_matches_hash_sort_oracle(self, names):
        z = make_zone(sorted(names))
        build_nsec3_chain(z, self.PARAMS)
        links = {}
        for (owner, rtype), recs in z.rrsets.items():
            if rtype is RecordType.NSEC3:
                links[owner.labels[0]] = recs[0].rdata.next_hashed
        hashes = sorted(oracles.reference_nsec3_hash(n.text(), 0, "chain-salt")
                        for n in z.all_names())
        assert links == {hashes[i]: hashes[(i + 1) % len(hashes)]
                         for i in range(len(hashes))}
        assert oracles.check_chain_cycle(links)

    def test_max_hash_owner_wraps_to_minimum(self):
        z = make_zone(["example", "a.example", "b.example"])
        build_nsec3_chain(z, self.PARAMS)
        hashes = sorted(z.nsec3_preimages)
        rec = z.get_rrset(z._hashed_owner(hashes[-1]), RecordType.NSEC3)[0]
        assert rec.rdata.next_hashed == hashes[0]


class TestMixedChain:
    def mixed_zone(self, salt="s0"):
        z = load_zone(fixture_text("mixed.zone"))
        params = NSEC3Params(1, 0, salt)
        assignment = {parse_name("example"): RecordType.NSEC3,
                      parse_name("a.example"): RecordType.NSEC,
                      parse_name("b.example"): RecordType.NSEC3,
                      parse_name("c.example"): RecordType.NSEC}
        build_mixed_chain(z, assignment, params)
        return z, params

    def test_nsec_pointers_step_over_hashed_owners(self):
        z, _ = self.mixed_zone()
        a = z.get_rrset(parse_name("a.example"), RecordType.NSEC)[0]
        c = z.get_rrset(parse_name("c.example"), RecordType.NSEC)[0]
        assert a.rdata.next_name == parse_name("b.example")
        assert c.rdata.next_name == parse_name("example")
        assert not z.get_rrset(parse_name("b.example"), RecordType.NSEC)

    def test_hashed_chain_links_nsec3_owners_only(self):
        z, params = self.mixed_zone()
        assert set(z.nsec3_preimages.values()) == {parse_name("example"),
                                                   parse_name("b.example")}
        hb = nsec3_hash(parse_name("b.example"), params)
        he = nsec3_hash(parse_name("example"), params)
        rec = z.get_rrset(z._hashed_owner(hb), RecordType.NSEC3)[0]
        assert rec.rdata.next_hashed == he

    def test_all_nsec_assignment_degenerates_to_nsec_chain(self):
        z1 = make_zone(["example", "a.example", "b.example"])
        build_nsec_chain(z1)
        z2 = make_zone(["example", "a.example", "b.example"])
        build_mixed_chain(z2, {o: RecordType.NSEC for o in z2.owner_names()},
                          NSEC3Params(1, 0, "s"))
        nsec = lambda z: {k: v for k, v in z.rrsets.items()
                          if k[1] is RecordType.NSEC}
        assert nsec(z1) == nsec(z2)
        assert z2.denial_family == "nsec"

    def test_partial_assignment_rejected(self):
        z = make_zone(["example", "a.example"])
        with pytest.raises(ContractViolation):
            build_mixed_chain(z, {parse_name("example"): RecordType.NSEC},
                              NSEC3Params(1, 0, "s"))


class TestSignZone:
    def test_dnskey_rrset_carries_two_sigs_others_one(self):
        z = signed_example_zone()
        apex = parse_name("example")
        assert len(z.sigs_covering(apex, RecordType.DNSKEY)) == 2
        assert len(z.sigs_covering(apex, RecordType.MX)) == 1
        assert len(z.sigs_covering(parse_name("ai.example"), RecordType.A)) == 1

    def test_wildcard_label_count_excludes_star(self):
        z = signed_example_zone()
        sig = z.sigs_covering(parse_name("*.w.example"), RecordType.MX)[0]
        assert sig.rdata.label_count == 2
        deep = z.sigs_covering(parse_name("x.y.w.example"), RecordType.MX)[0]
        assert deep.rdata.label_count == 4

    def test_signatures_verify_against_zone_keys(self):
        z = signed_example_zone()
        zsk = z.zsks()[0]
        owner = parse_name("ns.example")
        message = rrset_message(owner, RecordType.A,
                                z.get_rrset(owner, RecordType.A))
        sig = z.sigs_covering(owner, RecordType.A)[0]
        assert verify(sig.rdata.signature, message, zsk.public)

    def test_delegation_ns_and_glue_stay_unsigned(self):
        z = signed_example_zone()
        assert z.sigs_covering(parse_name("a.example"), RecordType.NS) == ()
        assert len(z.sigs_covering(parse_name("a.example"), RecordType.DS)) == 1

    def test_role_mixup_rejected(self):
        z = make_zone(["example"])
        with pytest.raises(ContractViolation):
            sign_zone(z, keygen("KSK", 8, "k1"), keygen("KSK", 8, "k2"))

    def test_empty_zone_gets_dnskey_rrset_and_sigs(self):
        z = make_zone(["example"])
        del z.rrsets[(parse_name("example"), RecordType.A)]
        z.rrsets[(parse_name("example"), RecordType.NS)] = ()
        del z.rrsets[(parse_name("example"), RecordType.NS)]
        sign_zone(z, keygen("ZSK", 8, "z"), keygen("KSK", 8, "k"))
        apex = parse_name("example")
        assert len(z.get_rrset(apex, RecordType.DNSKEY)) == 2
        assert len(z.sigs_covering(apex, RecordType.DNSKEY)) == 2

    def test_extra_zsks_sign_everything(self):
        z = make_zone(["example", "a.example"])
        sign_zone(z, keygen("ZSK", 8, "z8"), keygen("KSK", 8, "k"),
                  extra_zsks=[keygen("ZSK", 16, "z16")])
        sigs = z.sigs_covering(parse_name("a.example"), RecordType.A)
        assert sorted(s.rdata.algorithm for s in sigs) == [8, 16]
        assert len(z.get_rrset(parse_name("example"), RecordType.DNSKEY)) == 3


class TestDsFor:
    def test_digest_binds_child_ksk(self):
        z = signed_example_zone()
        (ds,) = ds_for(z)
        ksk_rec = [r for r in z.get_rrset(z.apex, RecordType.DNSKEY)
                   if r.rdata.flags == 257][0]
        assert ds.rdata.digest == dnskey_digest(z.apex, ksk_rec.rdata)

    def test_deterministic(self):
        z = signed_example_zone()
        assert ds_for(z) == ds_for(z)

    def test_tampered_key_changes_digest(self):
        z = signed_example_zone()
        (ds,) = ds_for(z)
        other = keygen("KSK", 8, "ksk-evil")
        import dnssecsim.zone as zone_mod
        fake = zone_mod.dnskey_record(z.apex, other)
        assert ds.rdata.digest != dnskey_digest(z.apex, fake.rdata)

    def test_unsigned_zone_rejected(self):
        z = make_zone(["example"])
        with pytest.raises(ContractViolation):
            ds_for(z)


def q(name, rtype="A", cd=False):
    return Query(qname=parse_name(name), qtype=RecordType[rtype], cd_bit=cd)


class TestAnswerQuery:
    def test_exact_match_with_sig(self):
        z = signed_example_zone()
        resp = answer_query(z, q("example", "MX"))
        assert resp.rcode is Rcode.NOERROR
        assert resp.answer[0].rdata.host == parse_name("xx.example")
        assert resp.answer[1].rtype is RecordType.RRSIG

    def test_exact_match_beats_wildcard(self):
        z = signed_example_zone()
        resp = answer_query(z, q("x.w.example", "MX"))
        assert resp.answer[0].rdata.host == parse_name("xx.example")
        assert resp.answer[1].rdata.label_count == 3

    def test_referral_for_delegated_name(self):
        z = signed_example_zone()
        resp = answer_query(z, q("deep.a.example"))
        assert resp.rcode is Rcode.NOERROR
        assert resp.answer == ()
        types = {r.rtype for r in resp.authority}
        assert types == {RecordType.NS, RecordType.DS, RecordType.RRSIG}

    def test_ds_at_cut_answered_by_parent(self):
        z = signed_example_zone()
        resp = answer_query(z, q("a.example", "DS"))
        assert resp.answer[0].rtype is RecordType.DS

    def test_out_of_zone_refused(self):
        z = signed_example_zone()
        assert answer_query(z, q("other.test")).rcode is Rcode.REFUSED

    def test_nxdomain_carries_cover_and_wildcard_proof(self):
        z = signed_example_zone()
        resp = answer_query(z, q("aa.example"))
        assert resp.rcode is Rcode.NXDOMAIN
        nsecs = [r for r in resp.authority if r.rtype is RecordType.NSEC]
        owners = {r.owner.text() for r in nsecs}
        # one record covers the hole, the other proves *.example is absent
        assert owners == {"a.example", "example"}

    def test_wildcard_synthesis(self):
        z = signed_example_zone()
        resp = answer_query(z, q("z.w.example", "MX"))
        assert resp.rcode is Rcode.NOERROR
        assert resp.answer[0].owner == parse_name("z.w.example")
        assert resp.answer[0].rdata.host == parse_name("ai.example")
        sig = resp.answer[1]
        assert sig.rdata.label_count == 2  # signed at *.w.example depth
        assert any(r.rtype is RecordType.NSEC for r in resp.authority)

    def test_wildcard_nodata(self):
        z = signed_example_zone()
        resp = answer_query(z, q("z.w.example", "A"))
        assert resp.rcode is Rcode.NOERROR
        assert resp.answer == ()
        assert any(r.rtype is RecordType.NSEC for r in resp.authority)

    def test_nodata_on_existing_name(self):
        z = signed_example_zone()
        resp = answer_query(z, q("ns.example", "MX"))
        assert resp.rcode is Rcode.NOERROR
        assert resp.answer == ()
        nsec = [r for r in resp.authority if r.rtype is RecordType.NSEC][0]
        assert nsec.owner == parse_name("ns.example")
        assert RecordType.MX not in nsec.rdata.types

    def test_stateless(self):
        z = signed_example_zone()
        assert answer_query(z, q("aa.example")) == answer_query(z, q("aa.example"))

    def test_nsec3_nxdomain_proof(self):
        z = load_zone(fixture_text("example.zone"))
        strip_denial(z)
        build_nsec3_chain(z, NSEC3Params(1, 0, "s3"))
        sign_zone(z, keygen("ZSK", 8, "z"), keygen("KSK", 8, "k"))
        resp = answer_query(z, q("aa.example"))
        assert resp.rcode is Rcode.NXDOMAIN
        n3 = [r for r in resp.authority if r.rtype is RecordType.NSEC3]
        assert len(n3) == 3  # encloser match, cover, wildcard cover
        assert all(r.owner.labels[1:] == z.apex.labels for r in n3)


class TestMixedZoneAnswers:
    def build(self, salt="s0", malicious=False):
        z = load_zone(fixture_text("mixed.zone"))
        params = NSEC3Params(1, 0, salt)
        assignment = {parse_name("example"): RecordType.NSEC3,
                      parse_name("a.example"): RecordType.NSEC,
                      parse_name("b.example"): RecordType.NSEC3,
                      parse_name("c.example"): RecordType.NSEC}
        build_mixed_chain(z, assignment, params)
        sign_zone(z, keygen("ZSK", 8, "z"), keygen("KSK", 8, "k"))
        if malicious:
            z.malicious_denial_span = (parse_name("b.example"),
                                       parse_name("c.example"))
        return z

    def test_honest_server_answers_c_example(self):
        z = self.build()
        resp = answer_query(z, q("c.example"))
        assert resp.rcode is Rcode.NOERROR
        assert resp.answer[0].rdata.address == "ip-c-example"

    def test_honest_nxdomain_between_a_and_b_covers_with_nsec(self):
        z = self.build()
        resp = answer_query(z, q("ab.example"))
        assert resp.rcode is Rcode.NXDOMAIN
        nsec = [r for r in resp.authority if r.rtype is RecordType.NSEC]
        assert len(nsec) == 1
        assert nsec[0].owner == parse_name("a.example")
        assert nsec[0].rdata.next_name == parse_name("b.example")
        # the wildcard piece can only come from the hashed chain, so the
        # honest response mixes families
        assert any(r.rtype is RecordType.NSEC3 for r in resp.authority)

    def attack_salt(self):
        from dnssecsim.zone import find_gap_salt
        return find_gap_salt(
            chain_names=[parse_name("example"), parse_name("b.example")],
            terminal=parse_name("b.example"),
            covered=[parse_name("bb.example"), parse_name("c.example"),
                     parse_name("*.example")])

    def test_malicious_server_serves_crafted_hashed_denial_in_the_gap(self):
        # the salt puts bb.example, c.example and the wildcard inside
        # b.example's hash span, so the crafted proof looks complete
        params = self.attack_salt()
        z = self.build(salt=params.salt, malicious=True)
        resp = answer_query(z, q("bb.example"))
        assert resp.rcode is Rcode.NXDOMAIN
        assert all(r.rtype in (RecordType.NSEC3, RecordType.RRSIG)
                   for r in resp.authority)
        owners = {r.owner for r in resp.authority
                  if r.rtype is RecordType.NSEC3}
        assert z._hashed_owner(nsec3_hash(parse_name("b.example"),
                                          params)) in owners

    def test_malicious_server_still_answers_c_example_directly(self):
        params = self.attack_salt()
        z = self.build(salt=params.salt, malicious=True)
        resp = answer_query(z, q("c.example"))
        assert resp.rcode is Rcode.NOERROR
        assert resp.answer[0].rdata.address == "ip-c-example"


class TestGapSalt:
    def test_found_salt_satisfies_reference_conditions(self):
        from dnssecsim.zone import find_gap_salt
        chain = [parse_name("example"), parse_name("b.example")]
        params = find_gap_salt(chain_names=chain,
                               terminal=parse_name("b.example"),
                               covered=[parse_name("bb.example"),
                                        parse_name("c.example"),
                                        parse_name("*.example")])
        assert oracles.verify_gap_salt(params.salt, params.iterations,
                                       ["example", "b.example"],
                                       "c.example", "*.example")
        assert oracles.verify_gap_salt(params.salt, params.iterations,
                                       ["example", "b.example"],
                                       "bb.example", "*.example")
        hashes = {n.text(): nsec3_hash(n, params) for n in chain}
        assert max(hashes.values()) == hashes["b.example"]
