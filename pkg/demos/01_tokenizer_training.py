"""Train a byte-level BPE tokenizer on a synthetic corpus and poke at it.

Run:  python3 demos/01_tokenizer_training.py
"""

from domainlm.synthetic import binary_corpus
from domainlm.tokenizer import Tokenizer

docs = binary_corpus(200, seed=0)
print(f"corpus: {len(docs)} documents, e.g. {docs[0].text!r}")

tokenizer = Tokenizer.train((d.text for d in docs), target_vocab_size=512)
print(f"vocabulary: {tokenizer.vocab_size} tokens ({len(tokenizer.merges)} learned merges)")

print("\nfirst ten merges (most frequent pairs first):")
for rank, (left, right) in enumerate(tokenizer.merges.pairs[:10]):
    print(f"  {rank:2d}: {left!r} + {right!r} -> {(left + right)!r}")

text = "the reactor moderator is heavy water"
ids = tokenizer.encode(text)
print(f"\nencode {text!r}")
print("  ids   :", ids)
print("  tokens:", [tokenizer.token_text(i) for i in ids])
assert tokenizer.decode(ids) == text
print("  decode roundtrips exactly")

weird = "Ünïcode 水素 🙂 and\ttabs"
assert tokenizer.decode(tokenizer.encode(weird)) == weird
print(f"byte-level coverage: {weird!r} roundtrips too")

print("\nspecial tokens occupy reserved ids:")
for name in tokenizer.specials.as_tuple():
    print(f"  {name:<7} id {tokenizer.vocab.id_of(name)}")
