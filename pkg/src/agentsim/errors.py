"""Exception types shared across the toolkit."""


class AgentSimError(Exception):
    """Base class for all toolkit errors."""


# corpus
class DuplicateDocId(AgentSimError):
    pass


class EmptyCorpus(AgentSimError):
    pass


class EmptyQuery(AgentSimError):
    pass


class UnknownDocId(AgentSimError):
    pass


# embedding
class EmptyText(AgentSimError):
    pass


class ProviderUnavailable(AgentSimError):
    pass


class DimensionMismatch(AgentSimError):
    pass


# seeding
class NoCandidates(AgentSimError):
    pass


class EmptyQueryPool(AgentSimError):
    pass


# simulation
class BackendError(AgentSimError):
    pass


class UnparseableAction(AgentSimError):
    pass


# validation / review queue
class PersistenceError(AgentSimError):
    pass


class AlreadyDecided(AgentSimError):
    pass


class StaleItem(AgentSimError):
    pass


class NoDoubleAnnotatedItems(AgentSimError):
    pass


# metrics
class SingleSeed(AgentSimError):
    pass


class ZeroVariance(AgentSimError):
    pass


# dataset export
class PendingReviewItems(AgentSimError):
    pass
