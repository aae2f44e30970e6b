"""Walk through how one test case is built.

A query is sampled from the query grammar, a response template from the
response grammar, and with probability 0.1 one byte-level mutation is
applied to the query, the response, or both.
"""

from collections import Counter

from qrfuzz.generator import MutationConfig, generate_case
from qrfuzz.wire import decode_message

BASE = "test-fwd.example.com"

case = generate_case("forward-only", BASE, seed=2024, cfg=MutationConfig(0.0))
q = decode_message(case.query_octets)
print("client query:", q.questions[0].qname.to_text(), q.flags)
print("query octets:", case.query_octets.hex())
print("grammar choices:", case.provenance["query"])

t = case.response_template
print(f"\nresponse template: {len(t.answers)} answer, {len(t.authorities)} authority, "
      f"{len(t.additionals)} additional record(s)")
for rr, info in zip(t.records(), case.provenance["records"]):
    print(f"  [{info['section']}] {rr.name.to_text():40s} type={rr.rtype:<4} "
          f"name-class={info['NAME']!r} rdlength-class={info['RDLENGTH']!r}")

# the attacker server fills TXID and question from whatever the resolver asks
wire = t.render(0xBEEF, case.query_octets[12:], 1)
print("\nrendered ns-response starts with", wire[:12].hex())

# mutation statistics over a batch
cases = [generate_case("forward-only", BASE, seed=s) for s in range(2000)]
mutated = [c for c in cases if c.mutated]
print(f"\n{len(mutated)}/{len(cases)} cases mutated")
print("targets:", dict(Counter(c.provenance["mutation_target"] for c in mutated)))
m = mutated[0].mutation_log[0]
print(f"example: {m.operator} at {m.field}[{m.offset}] with {m.data!r}")
