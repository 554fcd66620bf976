#ifndef KSEARCH_GRAMMAR_HPP
#define KSEARCH_GRAMMAR_HPP

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ksearch {

enum class KernelFamily { SE, LIN, PER, RQ };

const char* family_name(KernelFamily f);
KernelFamily family_from_name(std::string_view name);

// A one-dimensional base kernel acting on a single input coordinate.
struct BaseKernelLabel {
    KernelFamily family;
    int dimension = 0;

    bool operator==(const BaseKernelLabel&) const = default;
    std::string to_string() const;  // e.g. "SE0"
};

enum class OpKind { ADD, MULT };

struct OperatorLabel {
    OpKind kind;
    bool commutative = true;
    bool associative = true;

    bool operator==(const OperatorLabel&) const = default;
    const char* name() const { return kind == OpKind::ADD ? "ADD" : "MULT"; }
    char symbol() const { return kind == OpKind::ADD ? '+' : '*'; }

    static OperatorLabel add() { return {OpKind::ADD, true, true}; }
    static OperatorLabel mult() { return {OpKind::MULT, true, true}; }
};

class ExpressionTree;
using TreePtr = std::shared_ptr<const ExpressionTree>;

// Immutable binary expression tree: operator nodes, base-kernel leaves.
// Structural sharing between trees is fine; nodes never mutate.
class ExpressionTree {
public:
    static TreePtr leaf(BaseKernelLabel label);
    static TreePtr node(OperatorLabel op, TreePtr left, TreePtr right);

    bool is_leaf() const { return std::holds_alternative<BaseKernelLabel>(content_); }
    const BaseKernelLabel& label() const;  // leaf only
    const OperatorLabel& op() const;       // internal only
    const TreePtr& left() const;
    const TreePtr& right() const;

    int leaf_count() const { return leaf_count_; }
    int node_count() const { return node_count_; }
    // Longest root-to-leaf edge count; a bare leaf has depth 0.
    int depth() const { return depth_; }

    // Deterministic structural hash, invariant to swapping the children of
    // commutative operator nodes.
    std::uint64_t canonical_hash() const { return canonical_hash_; }

private:
    struct Internal {
        OperatorLabel op;
        TreePtr left;
        TreePtr right;
    };
    explicit ExpressionTree(BaseKernelLabel label);
    ExpressionTree(OperatorLabel op, TreePtr left, TreePtr right);

    std::variant<BaseKernelLabel, Internal> content_;
    int leaf_count_;
    int node_count_;
    int depth_;
    std::uint64_t canonical_hash_;
};

bool trees_equal(const TreePtr& a, const TreePtr& b);  // structural, order-sensitive

// Infix text form, e.g. "LIN0 + ((SE0 * PER0) + SE0)". Every internal node
// except the root is parenthesized, so parse(format(t)) == t structurally.
std::string format_tree(const TreePtr& tree);
TreePtr parse_tree(std::string_view text);  // throws std::invalid_argument

struct GrammarConfig {
    std::vector<KernelFamily> base_families{KernelFamily::SE, KernelFamily::LIN,
                                            KernelFamily::PER, KernelFamily::RQ};
    int dimensions = 1;
    std::vector<OperatorLabel> operators{OperatorLabel::add(), OperatorLabel::mult()};
    // Soft cap on tree depth for generative procedures; random ops that would
    // exceed it fall back to a leaf replacement.
    int depth_bound = 12;

    std::vector<BaseKernelLabel> base_labels() const;
    void validate() const;  // throws std::invalid_argument
};

// One grammar step. Positions index nodes in preorder (root = 0); leaf
// positions index leaves left to right.
struct ExtendOp {
    OperatorLabel op;
    int position = 0;
    BaseKernelLabel base;
};
struct ReplaceOp {
    int leaf_position = 0;
    BaseKernelLabel base;
};
using GrammarOp = std::variant<ExtendOp, ReplaceOp>;

// Returns a new tree; the input is never modified. Throws std::out_of_range
// for positions that do not exist.
TreePtr apply_grammar_op(const TreePtr& tree, const GrammarOp& op);

// Uniform over {add, multiply, replace}, then uniform over target positions
// and base labels. Deterministic given the generator state.
TreePtr random_grammar_op(const TreePtr& tree, const GrammarConfig& config,
                          std::mt19937_64& rng);

// Every tree reachable by exactly one grammar operation, deduplicated by
// canonical hash. Replace steps that keep the label are dropped.
std::vector<TreePtr> neighbors(const TreePtr& tree, const GrammarConfig& config);

// One tree per base label, built by applying two random grammar operations to
// the bare leaf; deduplicated by canonical hash.
std::vector<TreePtr> generate_initial_trees(const GrammarConfig& config,
                                            std::mt19937_64& rng);

// Node at preorder position (root = 0); nullptr if out of range.
TreePtr subtree_at(const TreePtr& tree, int position);
// Replace the node at preorder position with `replacement`.
TreePtr replace_subtree_at(const TreePtr& tree, int position, const TreePtr& replacement);

}  // namespace ksearch

#endif  // KSEARCH_GRAMMAR_HPP
