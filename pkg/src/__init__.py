"""Legal case similarity toolkit: citation graphs, embeddings and fusion."""
