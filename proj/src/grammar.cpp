#include "ksearch/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_set>

namespace ksearch {

namespace {

// splitmix64 finalizer; good avalanche for combining structural hashes.
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (b * 0x9e3779b97f4a7c15ULL + 0x7f4a7c15ULL));
}

}  // namespace

const char* family_name(KernelFamily f) {
    switch (f) {
        case KernelFamily::SE: return "SE";
        case KernelFamily::LIN: return "LIN";
        case KernelFamily::PER: return "PER";
        case KernelFamily::RQ: return "RQ";
    }
    return "?";
}

KernelFamily family_from_name(std::string_view name) {
    if (name == "SE") return KernelFamily::SE;
    if (name == "LIN") return KernelFamily::LIN;
    if (name == "PER") return KernelFamily::PER;
    if (name == "RQ") return KernelFamily::RQ;
    throw std::invalid_argument("unknown base kernel family: " + std::string(name));
}

std::string BaseKernelLabel::to_string() const {
    return std::string(family_name(family)) + std::to_string(dimension);
}

ExpressionTree::ExpressionTree(BaseKernelLabel label)
    : content_(label), leaf_count_(1), node_count_(1), depth_(0) {
    canonical_hash_ = mix64(hash_combine(0x1eafULL + static_cast<std::uint64_t>(label.family),
                                         static_cast<std::uint64_t>(label.dimension) + 1));
}

ExpressionTree::ExpressionTree(OperatorLabel op, TreePtr left, TreePtr right)
    : content_(Internal{op, std::move(left), std::move(right)}) {
    const auto& in = std::get<Internal>(content_);
    leaf_count_ = in.left->leaf_count_ + in.right->leaf_count_;
    node_count_ = in.left->node_count_ + in.right->node_count_ + 1;
    depth_ = 1 + std::max(in.left->depth_, in.right->depth_);
    std::uint64_t hl = in.left->canonical_hash_;
    std::uint64_t hr = in.right->canonical_hash_;
    if (op.commutative && hl > hr) std::swap(hl, hr);
    canonical_hash_ = hash_combine(hash_combine(0x0bULL + static_cast<std::uint64_t>(op.kind), hl), hr);
}

TreePtr ExpressionTree::leaf(BaseKernelLabel label) {
    return TreePtr(new ExpressionTree(label));
}

TreePtr ExpressionTree::node(OperatorLabel op, TreePtr left, TreePtr right) {
    if (!left || !right) throw std::invalid_argument("operator node needs two children");
    return TreePtr(new ExpressionTree(op, std::move(left), std::move(right)));
}

const BaseKernelLabel& ExpressionTree::label() const {
    return std::get<BaseKernelLabel>(content_);
}

const OperatorLabel& ExpressionTree::op() const {
    return std::get<Internal>(content_).op;
}

const TreePtr& ExpressionTree::left() const {
    return std::get<Internal>(content_).left;
}

const TreePtr& ExpressionTree::right() const {
    return std::get<Internal>(content_).right;
}

bool trees_equal(const TreePtr& a, const TreePtr& b) {
    if (a.get() == b.get()) return true;
    if (a->is_leaf() != b->is_leaf()) return false;
    if (a->is_leaf()) return a->label() == b->label();
    return a->op() == b->op() && trees_equal(a->left(), b->left()) &&
           trees_equal(a->right(), b->right());
}

namespace {

void format_rec(const TreePtr& t, std::string& out, bool parenthesize) {
    if (t->is_leaf()) {
        out += t->label().to_string();
        return;
    }
    if (parenthesize) out += '(';
    format_rec(t->left(), out, true);
    out += ' ';
    out += t->op().symbol();
    out += ' ';
    format_rec(t->right(), out, true);
    if (parenthesize) out += ')';
}

struct Parser {
    std::string_view text;
    size_t pos = 0;

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }
    [[noreturn]] void fail(const std::string& what) {
        throw std::invalid_argument("parse error at offset " + std::to_string(pos) + ": " + what);
    }
    char peek() {
        skip_ws();
        return pos < text.size() ? text[pos] : '\0';
    }

    TreePtr parse_atom() {
        skip_ws();
        if (peek() == '(') {
            ++pos;
            TreePtr inner = parse_expr();
            if (peek() != ')') fail("expected ')'");
            ++pos;
            return inner;
        }
        size_t start = pos;
        while (pos < text.size() && std::isalpha(static_cast<unsigned char>(text[pos]))) ++pos;
        if (pos == start) fail("expected base kernel name");
        KernelFamily fam = family_from_name(text.substr(start, pos - start));
        size_t dstart = pos;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
        if (pos == dstart) fail("base kernel label needs a dimension suffix");
        int dim = std::stoi(std::string(text.substr(dstart, pos - dstart)));
        return ExpressionTree::leaf({fam, dim});
    }

    // Left-associative chains of one operator level; our own formatter emits
    // at most one operator per level.
    TreePtr parse_expr() {
        TreePtr lhs = parse_atom();
        while (true) {
            char c = peek();
            if (c != '+' && c != '*') return lhs;
            ++pos;
            OperatorLabel op = (c == '+') ? OperatorLabel::add() : OperatorLabel::mult();
            TreePtr rhs = parse_atom();
            lhs = ExpressionTree::node(op, std::move(lhs), std::move(rhs));
        }
    }
};

}  // namespace

std::string format_tree(const TreePtr& tree) {
    std::string out;
    format_rec(tree, out, false);
    return out;
}

TreePtr parse_tree(std::string_view text) {
    Parser p{text};
    TreePtr t = p.parse_expr();
    p.skip_ws();
    if (p.pos != text.size()) p.fail("trailing characters");
    return t;
}

std::vector<BaseKernelLabel> GrammarConfig::base_labels() const {
    std::vector<BaseKernelLabel> labels;
    labels.reserve(base_families.size() * static_cast<size_t>(dimensions));
    for (KernelFamily f : base_families)
        for (int d = 0; d < dimensions; ++d) labels.push_back({f, d});
    return labels;
}

void GrammarConfig::validate() const {
    if (base_families.empty()) throw std::invalid_argument("grammar needs at least one base family");
    if (operators.empty()) throw std::invalid_argument("grammar needs at least one operator");
    if (dimensions < 1) throw std::invalid_argument("grammar needs dimensions >= 1");
    if (depth_bound < 0) throw std::invalid_argument("depth_bound must be >= 0");
}

namespace {

// Preorder node replacement; `counter` tracks the preorder index.
TreePtr replace_rec(const TreePtr& t, int target, int& counter, const TreePtr& replacement) {
    int my_index = counter++;
    if (my_index == target) return replacement;
    if (t->is_leaf()) return t;
    TreePtr new_left = replace_rec(t->left(), target, counter, replacement);
    TreePtr new_right = replace_rec(t->right(), target, counter, replacement);
    if (new_left == t->left() && new_right == t->right()) return t;
    return ExpressionTree::node(t->op(), std::move(new_left), std::move(new_right));
}

TreePtr find_rec(const TreePtr& t, int target, int& counter) {
    int my_index = counter++;
    if (my_index == target) return t;
    if (t->is_leaf()) return nullptr;
    if (TreePtr l = find_rec(t->left(), target, counter)) return l;
    return find_rec(t->right(), target, counter);
}

// Leaf positions in left-to-right order; returns preorder index of that leaf.
int leaf_preorder_index(const TreePtr& t, int leaf_position) {
    int preorder = 0;
    int leaf_seen = 0;
    int found = -1;
    auto walk = [&](auto&& self, const TreePtr& n) -> void {
        if (found >= 0) return;
        int idx = preorder++;
        if (n->is_leaf()) {
            if (leaf_seen++ == leaf_position) found = idx;
            return;
        }
        self(self, n->left());
        self(self, n->right());
    };
    walk(walk, t);
    return found;
}

}  // namespace

TreePtr subtree_at(const TreePtr& tree, int position) {
    if (position < 0 || position >= tree->node_count()) return nullptr;
    int counter = 0;
    return find_rec(tree, position, counter);
}

TreePtr replace_subtree_at(const TreePtr& tree, int position, const TreePtr& replacement) {
    if (position < 0 || position >= tree->node_count())
        throw std::out_of_range("node position " + std::to_string(position) + " out of range (tree has " +
                                std::to_string(tree->node_count()) + " nodes)");
    int counter = 0;
    return replace_rec(tree, position, counter, replacement);
}

TreePtr apply_grammar_op(const TreePtr& tree, const GrammarOp& op) {
    if (const auto* ext = std::get_if<ExtendOp>(&op)) {
        TreePtr target = subtree_at(tree, ext->position);
        if (!target)
            throw std::out_of_range("extend position " + std::to_string(ext->position) +
                                    " out of range (tree has " + std::to_string(tree->node_count()) +
                                    " nodes)");
        TreePtr expanded = ExpressionTree::node(ext->op, target, ExpressionTree::leaf(ext->base));
        return replace_subtree_at(tree, ext->position, expanded);
    }
    const auto& rep = std::get<ReplaceOp>(op);
    int idx = leaf_preorder_index(tree, rep.leaf_position);
    if (idx < 0)
        throw std::out_of_range("leaf position " + std::to_string(rep.leaf_position) +
                                " out of range (tree has " + std::to_string(tree->leaf_count()) +
                                " leaves)");
    return replace_subtree_at(tree, idx, ExpressionTree::leaf(rep.base));
}

TreePtr random_grammar_op(const TreePtr& tree, const GrammarConfig& config, std::mt19937_64& rng) {
    const auto labels = config.base_labels();
    std::uniform_int_distribution<int> kind_dist(0, 2);  // add, multiply, replace
    std::uniform_int_distribution<size_t> label_dist(0, labels.size() - 1);
    int kind = kind_dist(rng);
    if (kind < 2) {
        OperatorLabel op = (kind == 0) ? OperatorLabel::add() : OperatorLabel::mult();
        std::uniform_int_distribution<int> pos_dist(0, tree->node_count() - 1);
        ExtendOp ext{op, pos_dist(rng), labels[label_dist(rng)]};
        TreePtr result = apply_grammar_op(tree, ext);
        if (result->depth() <= config.depth_bound) return result;
        // fall through to a replacement when the depth cap would be exceeded
    }
    std::uniform_int_distribution<int> leaf_dist(0, tree->leaf_count() - 1);
    ReplaceOp rep{leaf_dist(rng), labels[label_dist(rng)]};
    return apply_grammar_op(tree, rep);
}

std::vector<TreePtr> neighbors(const TreePtr& tree, const GrammarConfig& config) {
    const auto labels = config.base_labels();
    std::vector<TreePtr> result;
    std::unordered_set<std::uint64_t> seen;
    seen.insert(tree->canonical_hash());
    auto push = [&](TreePtr t) {
        if (seen.insert(t->canonical_hash()).second) result.push_back(std::move(t));
    };
    for (int pos = 0; pos < tree->node_count(); ++pos)
        for (const OperatorLabel& op : config.operators)
            for (const BaseKernelLabel& base : labels)
                push(apply_grammar_op(tree, ExtendOp{op, pos, base}));
    for (int leaf = 0; leaf < tree->leaf_count(); ++leaf)
        for (const BaseKernelLabel& base : labels)
            push(apply_grammar_op(tree, ReplaceOp{leaf, base}));
    return result;
}

std::vector<TreePtr> generate_initial_trees(const GrammarConfig& config, std::mt19937_64& rng) {
    std::vector<TreePtr> result;
    std::unordered_set<std::uint64_t> seen;
    for (const BaseKernelLabel& base : config.base_labels()) {
        TreePtr t = ExpressionTree::leaf(base);
        t = random_grammar_op(t, config, rng);
        t = random_grammar_op(t, config, rng);
        if (seen.insert(t->canonical_hash()).second) result.push_back(std::move(t));
    }
    return result;
}

}  // namespace ksearch
