"""Walk through the corpus pipeline: filter, select, normalize, compile.

Builds a handful of annotated documents in memory, applies the same steps the
`textent build-corpus` command runs, and prints what each stage does.
"""

from textent import (Annotation, RawDocument, build_corpus, emit_pretrain_stream,
                     filter_annotations, load_dataset, normalize, save_dataset)

docs = [
    RawDocument(
        doc_id="apple",
        target_entity="Apple Inc.",
        tokens="Apple Inc is an American technology company from Cupertino".split(),
        annotations=[
            Annotation(start=0, end=2, entity="Apple Inc.", score=1.0),
            Annotation(start=4, end=5, entity="United States", score=0.62),
            Annotation(start=8, end=9, entity="Cupertino, California", score=0.03),
        ],
        incoming_links=120,
    ),
    RawDocument(
        doc_id="cupertino",
        target_entity="Cupertino, California",
        tokens="Cupertino is a city in California known for Apple".split(),
        annotations=[
            Annotation(start=5, end=6, entity="California", score=0.9),
            Annotation(start=8, end=9, entity="Apple Inc.", score=0.8),
        ],
        incoming_links=30,
    ),
    RawDocument(
        doc_id="obscure",
        target_entity="Some Stub",
        tokens="a very short stub".split(),
        annotations=[],
        incoming_links=2,   # below the link cutoff: dropped
    ),
]

print("== annotation score filter (threshold 0.05, boundary survives) ==")
filtered = filter_annotations(docs[0], min_score=0.05)
for ann in filtered.annotations:
    print(f"  kept {ann.entity!r} (score {ann.score})")

print("\n== the entity-replaced stream used for pretraining ==")
prepared = [normalize(filter_annotations(d, 0.05)) for d in docs]
for sentence in emit_pretrain_stream(prepared):
    print(" ", " ".join(sentence))

print("\n== full build: link filter, counts, vocabularies, compilation ==")
dataset, stats = build_corpus(docs, min_word_count=1, min_entity_count=1,
                              min_links=5, min_score=0.05,
                              max_words=2000, max_entities=300)
print(f"  {stats['input_documents']} documents in, "
      f"{stats['selected_documents']} selected")
vocab = dataset.vocab
print(f"  vocabulary: {vocab.n_words} words, {vocab.n_ctx_entities} contextual "
      f"entities, {vocab.n_target_entities} target entities")
for doc in dataset.documents:
    print(f"  target={vocab.target_entity(doc.target)!r:<26} "
          f"words={doc.words} ctx={doc.ctx_entities}")

print("\n== binary round trip ==")
save_dataset(dataset, "/tmp/demo_corpus.txe", config={"demo": True})
reloaded = load_dataset("/tmp/demo_corpus.txe")
print(f"  reloaded {len(reloaded.documents)} documents, "
      f"vocab hash {reloaded.vocab.content_hash()[:12]}…")
