"""Query-response fuzzing for DNS resolvers."""

__version__ = "0.1.0"

from .wire import DnsMessage, DnsName, Flags, Question, ResourceRecord, decode_message, encode_message
from .grammar import Grammar, SampleContext, parse_grammar, sample, validate
from .builtin_grammars import load_builtin_query_grammar, load_builtin_response_grammar
from .generator import MODES, MutationConfig, ResponseTemplate, TestCase, generate_case, mutate_bytes
