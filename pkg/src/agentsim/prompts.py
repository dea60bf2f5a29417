"""Fixed prompt templates for the analyst/critic roles.

The templates are versioned artifacts: their hash is stamped into every
trace so a trace can always be matched to the exact prompts that produced
it.
"""

from __future__ import annotations

import hashlib

ACTION_FORMAT = """\
Respond with exactly one action in this format:

Thought: <why you are taking this action>
Action: <search | rerank | summarize | synthesize | abstain>

Then the fields for the chosen action:
  search     -> Query: <search query>
  rerank     -> Order: <doc_id, doc_id, ...>
  summarize  -> Docs: <doc_id, doc_id, ...>
                Summary: <summary text>
  synthesize -> Answer: <answer text>
                Cites: <doc_id, doc_id, ...>
  abstain    -> Reason: <why the evidence is insufficient>
"""

ANALYST_TEMPLATE = """\
You are the analyst in a retrieval-augmented research workflow. Using the
document corpus through the available tools, work toward a grounded answer
to the question. Search when you need evidence, synthesize only when the
evidence supports an answer, and abstain when it cannot.

{action_format}
Question: {question}

{history}
Your next step:
"""

CRITIC_TEMPLATE = """\
You are a critic reviewing a proposed step in a retrieval-augmented research
workflow. Either approve the proposal or replace it with a better action.

To approve, respond with the single word: Approve
To revise, respond with a full action:

{action_format}
Question: {question}

{history}
Proposed step:
{proposal}

Your verdict:
"""

FORMAT_REMINDER = """\

Your previous reply could not be parsed. Respond again using exactly the
action format given above, with no extra commentary.
"""

_TEMPLATES = (ACTION_FORMAT, ANALYST_TEMPLATE, CRITIC_TEMPLATE, FORMAT_REMINDER)

PROMPT_BUNDLE_HASH = hashlib.sha256("\n".join(_TEMPLATES).encode("utf-8")).hexdigest()
