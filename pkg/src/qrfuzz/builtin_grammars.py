"""Built-in query and response grammars and their terminal generators."""

from __future__ import annotations

import random
import string
import struct
from functools import lru_cache

from .grammar import Derivation, Grammar, SampleContext, parse_grammar
from .wire import DnsName, type_code

QUERY_GRAMMAR_TEXT = """\
<start> ::= <query>
<query> ::= <Header><Question>
<Header> ::= <TransactionID><Flags><RRs>
<TransactionID> ::= (randomly generated 2-byte hex value)
<Flags> ::= <QR><OPCODE><AA><TC><RD><RA><Z><AD><CD><RCODE>
<QR> ::= 0
<OPCODE> ::= QUERY[.80] | IQUERY[.04] | STATUS[.04] | NOTIFY[.04] | UPDATE[.04] | DSO[.04]
<AA> ::= 0 | 1
<TC> ::= 0 | 1
<RD> ::= 0 | 1
<RA> ::= 0 | 1
<Z> ::= 0 | 1
<AD> ::= 0 | 1
<CD> ::= 0 | 1
<RCODE> ::= NOERROR[.80] | FORMERR[.01] | SERVFAIL[.01] | NXDOMAIN[.01] | NOTIMP[.01] | REFUSED[.01] | YXDOMAIN[.01] | YXRRSET[.01] | NXRRSET[.01] | NOTAUTH[.01] | NOTZONE[.01] | DSOTYPENI[.01] | BADVERS[.01] | BADSIG[.01] | BADKEY[.01] | BADTIME[.01] | BADMODE[.01] | BADNAME[.01] | BADALG[.01] | BADTRUNC[.01] | BADCOOKIE[.01]
<RRs> ::= <QDCOUNT><ANCOUNT><NSCOUNT><ARCOUNT>
<QDCOUNT> ::= 1
<ANCOUNT> ::= 0
<NSCOUNT> ::= 0
<ARCOUNT> ::= 0
<Question> ::= <QNAME><QTYPE><QCLASS>
<QNAME> ::= (base domain)[.40] |
            (sub-domain)[.40] |
            (2-9th sub-domain)[.10] |
            (10-max sub-domain)[.10] |
<QTYPE> ::= A | NS | CNAME | SOA | PTR | MX | TXT | AAAA | RRSIG | SPF | ANY
<QCLASS> ::= IN
"""

RESPONSE_GRAMMAR_TEXT = """\
<start> ::= <response>
<response> ::= <Header><Answer><Authority><Additional>
<Header> ::= <Flags><RRs>
<Flags> ::= <QR><OPCODE><AA><TC><RD><RA><Z><AD><CD><RCODE>
<QR> ::= 1
<OPCODE> ::= QUERY[.80] | IQUERY[.04] | STATUS[.04] | NOTIFY[.04] | UPDATE[.04] | DSO[.04]
<AA> ::= 0 | 1
<TC> ::= 0 | 1
<RD> ::= 0 | 1
<RA> ::= 0 | 1
<Z> ::= 0 | 1
<AD> ::= 0 | 1
<CD> ::= 0 | 1
<RCODE> ::= NOERROR[.80] | FORMERR[.01] | SERVFAIL[.01] | NXDOMAIN[.01] | NOTIMP[.01] | REFUSED[.01] | YXDOMAIN[.01] | YXRRSET[.01] | NXRRSET[.01] | NOTAUTH[.01] | NOTZONE[.01] | DSOTYPENI[.01] | BADVERS[.01] | BADSIG[.01] | BADKEY[.01] | BADTIME[.01] | BADMODE[.01] | BADNAME[.01] | BADALG[.01] | BADTRUNC[.01] | BADCOOKIE[.01]
<RRs> ::= <ANCOUNT><NSCOUNT><ARCOUNT>
<ANCOUNT> ::= 0 | 1 | 2 | 3 | 4 | 5
<NSCOUNT> ::= 0 | 1 | 2 | 3 | 4 | 5
<ARCOUNT> ::= 0 | 1 | 2 | 3 | 4 | 5
<Answer> ::= "" | <Record> | <Record>*2 | <Record>*3 | <Record>*4 | <Record>*5
<Authority> ::= "" | <Record> | <Record>*2 | <Record>*3 | <Record>*4 | <Record>*5
<Additional> ::= "" | <Record> | <Record>*2 | <Record>*3 | <Record>*4 | <Record>*5
<Record> ::= <NAME><TYPE><CLASS><TTL><RDLENGTH><RDATA>
<NAME> ::= (domain queried)[.2] |
            (sub-domain)[.2] |
            (same-level domain)[.2] |
            (parent domain)[.2] |
            (unrelated domain)[.2]
<TYPE> ::= (TYPE queried)[.50] | A[.05] | NS[.05] | CNAME[.05] | SOA[.05] | PTR[.05] | MX[.05] | TXT[.05] | AAAA[.05] | RRSIG[.05] | SPF[.05]
<CLASS> ::= IN
<TTL> ::= 60
<RDLENGTH> ::= (length of <RDATA>)[.90] |  (random value in [length, 2*length])[.05] |  (random value in [0, length])[.05]
<RDATA> ::= (randomly generated data decided by <TYPE>)
"""

MAX_NAME_OCTETS = 255
LABEL_ALPHABET = string.ascii_lowercase + string.digits
TXT_ALPHABET = string.ascii_letters + string.digits + " =-_"
UNRELATED_TLDS = (b"net", b"org", b"io", b"com")


def random_label(rng: random.Random, lo: int = 1, hi: int = 16) -> bytes:
    return "".join(rng.choices(LABEL_ALPHABET, k=rng.randint(lo, hi))).encode()


def max_subdomain_depth(base: DnsName) -> int:
    """Most 1-octet labels that fit in front of ``base`` within 255 octets."""
    return (MAX_NAME_OCTETS - base.wire_length) // 2


def deep_subdomain(rng: random.Random, base: DnsName, depth: int) -> DnsName:
    """``depth`` random labels prepended to ``base``, shrunk to stay within 255 octets."""
    budget = MAX_NAME_OCTETS - base.wire_length
    if depth * 2 > budget:
        raise ValueError(f"depth {depth} does not fit under {base}")
    labels = []
    for i in range(depth):
        reserve = 2 * (depth - i - 1)
        hi = min(16, budget - reserve - 1)
        label = random_label(rng, 1, hi)
        budget -= len(label) + 1
        labels.append(label)
    return base.prepend(*labels)


def prepend_fitting(rng: random.Random, base: DnsName) -> DnsName:
    room = MAX_NAME_OCTETS - base.wire_length - 1
    if room < 1:
        return base
    return base.prepend(random_label(rng, 1, min(16, room)))


def unrelated_domain(rng: random.Random) -> DnsName:
    return DnsName((random_label(rng, 3, 12), rng.choice(UNRELATED_TLDS)))


# --- query generators ------------------------------------------------------

def _txid(rng, ctx, d):
    return rng.getrandbits(16)


def _base(rng, ctx, d):
    return ctx.base_domain


def _sub(rng, ctx, d):
    return prepend_fitting(rng, ctx.base_domain)


def _depth_2_9(rng, ctx, d):
    return deep_subdomain(rng, ctx.base_domain, rng.randint(2, min(9, max_subdomain_depth(ctx.base_domain))))


def _depth_10_max(rng, ctx, d):
    cap = max_subdomain_depth(ctx.base_domain)
    return deep_subdomain(rng, ctx.base_domain, rng.randint(min(10, cap), cap))


# --- response generators ---------------------------------------------------

def _queried(ctx: SampleContext) -> DnsName:
    return ctx.queried_name if ctx.queried_name is not None else ctx.base_domain


def _name_queried(rng, ctx, d):
    return _queried(ctx)


def _name_sub(rng, ctx, d):
    return prepend_fitting(rng, _queried(ctx))


def _name_same_level(rng, ctx, d):
    q = _queried(ctx)
    return prepend_fitting(rng, q.parent()) if q.labels else DnsName((random_label(rng),))


def _name_parent(rng, ctx, d):
    return _queried(ctx).parent()


def _name_unrelated(rng, ctx, d):
    return unrelated_domain(rng)


def _type_queried(rng, ctx, d):
    return ctx.queried_type if ctx.queried_type is not None else 1


def _target_name(rng: random.Random, ctx: SampleContext) -> bytes:
    if ctx.base_domain.labels and rng.random() < 0.5:
        n = prepend_fitting(rng, ctx.base_domain)
    else:
        n = unrelated_domain(rng)
    return n.to_wire()


def random_rdata(rng: random.Random, ctx: SampleContext, rtype: int) -> bytes:
    if rtype == 1:
        return rng.randbytes(4)
    if rtype == 28:
        return rng.randbytes(16)
    if rtype in (2, 5, 12):
        return _target_name(rng, ctx)
    if rtype in (16, 99):
        s = "".join(rng.choices(TXT_ALPHABET, k=rng.randint(1, 32))).encode()
        return bytes([len(s)]) + s
    if rtype == 15:
        return struct.pack("!H", rng.randint(0, 100)) + _target_name(rng, ctx)
    if rtype == 6:
        mname = _target_name(rng, ctx)
        rname = b"\x0ahostmaster" + _target_name(rng, ctx)
        nums = struct.pack("!IIIII", rng.getrandbits(32), rng.randint(60, 86400),
                           rng.randint(60, 86400), rng.randint(60, 2419200), rng.randint(0, 86400))
        return mname + rname + nums
    if rtype == 46:
        covered = rng.choice((1, 2, 5, 6, 15, 16, 28))
        head = struct.pack("!HBBIIIH", covered, rng.choice((8, 13, 15)), rng.randint(1, 4), 60,
                           rng.getrandbits(32), rng.getrandbits(32), rng.getrandbits(16))
        signer = (ctx.base_domain if ctx.base_domain.labels else DnsName((b"example",))).to_wire()
        return head + signer + rng.randbytes(32)
    return rng.randbytes(rng.randint(1, 16))


def _rdata(rng, ctx, d: Derivation):
    return random_rdata(rng, ctx, type_code(d["TYPE"]))


def _len_exact(rng, ctx, d):
    return len(d["RDATA"])


def _len_inflated(rng, ctx, d):
    n = len(d["RDATA"])
    return rng.randint(n, min(2 * n, 0xFFFF))


def _len_deflated(rng, ctx, d):
    return rng.randint(0, len(d["RDATA"]))


@lru_cache(maxsize=None)
def _query_grammar() -> Grammar:
    g = parse_grammar(QUERY_GRAMMAR_TEXT, name="dns-query")
    g.register("(randomly generated 2-byte hex value)", _txid)
    g.register("(base domain)", _base)
    g.register("(sub-domain)", _sub)
    g.register("(2-9th sub-domain)", _depth_2_9)
    g.register("(10-max sub-domain)", _depth_10_max)
    return g


@lru_cache(maxsize=None)
def _response_grammar() -> Grammar:
    g = parse_grammar(RESPONSE_GRAMMAR_TEXT, name="dns-response")
    g.register("(domain queried)", _name_queried)
    g.register("(sub-domain)", _name_sub)
    g.register("(same-level domain)", _name_same_level)
    g.register("(parent domain)", _name_parent)
    g.register("(unrelated domain)", _name_unrelated)
    g.register("(TYPE queried)", _type_queried)
    g.register("(randomly generated data decided by <TYPE>)", _rdata, after=("TYPE",))
    g.register("(length of <RDATA>)", _len_exact, after=("RDATA",))
    g.register("(random value in [length, 2*length])", _len_inflated, after=("RDATA",))
    g.register("(random value in [0, length])", _len_deflated, after=("RDATA",))
    return g


def load_builtin_query_grammar() -> Grammar:
    """Query grammar; the returned object is shared and must not be mutated."""
    return _query_grammar()


def load_builtin_response_grammar() -> Grammar:
    return _response_grammar()
