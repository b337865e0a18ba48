"""groupdesk: a retrieval-backed technical assistant engine for group chats.

The engine turns noisy group-chat traffic into answerable queries, refuses
everything that is not a genuine domain question, and answers the rest from
a curated knowledge base, per-group repositories, and (optionally) the web,
with every decision recorded in an auditable gate trace.
"""

__version__ = "0.1.0"
