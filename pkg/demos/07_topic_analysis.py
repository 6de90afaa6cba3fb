"""Embedding export, 2-D projection, density clustering, topic words.

Fine-tuned position-0 embeddings of a document sample are projected to two
dimensions with PCA and grouped by radius-based density clustering; each
cluster's representative words come from class-based TF-IDF over the
concatenated cluster documents.

Run:  python3 demos/07_topic_analysis.py
"""

from collections import Counter

from domainlm.analysis import (
    cbtfidf_topics,
    cluster_embeddings,
    export_cls_embeddings,
    project_2d,
    topic_report,
)
from domainlm.model import ModelConfig
from domainlm.synthetic import binary_corpus
from domainlm.tokenizer import Tokenizer
from domainlm.training import TrainingConfig, finetune_classifier, pack_segments, pretrain_mlm

docs = binary_corpus(280, seed=11)
tokenizer = Tokenizer.train((d.text for d in docs), 512)
model_config = ModelConfig(
    num_layers=2, num_heads=2, hidden_dim=32, ff_dim=64,
    vocab_size=tokenizer.vocab_size, max_positions=64, dropout_rate=0.0,
)

print("pretraining and fine-tuning a binary classifier...")
segments = pack_segments((tokenizer.encode(d.text) for d in docs), tokenizer.sep_id, 32)
base = pretrain_mlm(
    TrainingConfig(learning_rate=3e-3, batch_size=16, total_steps=200, log_every=100, seed=3),
    segments, model_config, tokenizer,
).checkpoint
finetuned = finetune_classifier(
    TrainingConfig(learning_rate=1e-3, batch_size=16, epochs=3, eval_checkpoints=4, log_every=50, seed=13),
    base, "binary", docs[:240], docs[240:], tokenizer,
).best_checkpoint

matrix = export_cls_embeddings(finetuned, docs, sample_size=200, seed=1, tokenizer=tokenizer)
coords = project_2d(matrix)
print(f"exported {matrix.matrix.shape[0]} embeddings of width {matrix.matrix.shape[1]}, "
      f"projected to {coords.shape[1]}-D")

assignment = cluster_embeddings(matrix, min_cluster_size=8, radius=1.0)
sizes = Counter(assignment.assignments.values())
print(f"{assignment.n_clusters} density clusters "
      f"({', '.join(f'#{c}: {sizes[c]}' for c in range(1, assignment.n_clusters + 1))}); "
      f"{len(assignment.outliers())} outliers")

labels = {d.id: d.nfc_label for d in docs}
for cluster in range(1, assignment.n_clusters + 1):
    members = assignment.members(cluster)
    positive = sum(1 for i in members if labels[i])
    print(f"  cluster {cluster}: {positive}/{len(members)} fuel-cycle-positive documents")

sample_docs = [d for d in docs if d.id in assignment.assignments]
summary = cbtfidf_topics(assignment, sample_docs, top_k=3)
print("\nrepresentative words per cluster (class-based TF-IDF):")
print(topic_report(summary))
