#pragma once
// Debate corpus: flat post records, reconstructed discussion trees,
// root-to-leaf threads, and thread-dynamics statistics.

#include <array>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "adhom/common.hpp"

namespace adhom {

// The moderation rule whose violation marks a post as an ad hominem argument.
inline constexpr int kHostilityRuleId = 2;

struct PostRecord {
    std::string id;
    std::optional<std::string> parent_id;  // absent for submissions
    std::string submission_id;
    std::string author;
    std::string body;
    std::optional<std::string> title;  // submissions only
    long long created_at = 0;
    std::set<int> violated_rules;
    bool delta_awarded = false;

    bool is_submission() const { return !parent_id.has_value(); }
    bool is_ad_hominem() const { return violated_rules.count(kHostilityRuleId) > 0; }

    std::string text() const {
        if (title && !title->empty()) {
            return body.empty() ? *title : *title + "\n" + body;
        }
        return body;
    }
};

struct QuarantineEntry {
    std::size_t line_no = 0;  // 1-based line in the input stream
    std::string id;           // empty when the record was unparseable
    std::string reason;
};

struct QuarantineReport {
    std::vector<QuarantineEntry> entries;
    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }
};

// Immutable after ingest; posts_[0] is the submission, the rest keep input order.
class DiscussionTree {
public:
    DiscussionTree(PostRecord submission, std::vector<PostRecord> comments,
                   std::vector<std::size_t> comment_lines, std::size_t submission_line)
        : first_line_(submission_line) {
        posts_.reserve(comments.size() + 1);
        lines_.reserve(comments.size() + 1);
        posts_.push_back(std::move(submission));
        lines_.push_back(submission_line);
        for (std::size_t i = 0; i < comments.size(); ++i) {
            posts_.push_back(std::move(comments[i]));
            lines_.push_back(comment_lines[i]);
            first_line_ = std::min(first_line_, comment_lines[i]);
        }
        for (std::size_t i = 0; i < posts_.size(); ++i) {
            index_[posts_[i].id] = i;
            if (i > 0) children_[*posts_[i].parent_id].push_back(posts_[i].id);
        }
        // Sibling order: (created_at, id) — deterministic for downstream sampling.
        for (auto& [parent, kids] : children_) {
            std::sort(kids.begin(), kids.end(), [this](const std::string& a, const std::string& b) {
                const PostRecord& pa = post(a);
                const PostRecord& pb = post(b);
                if (pa.created_at != pb.created_at) return pa.created_at < pb.created_at;
                return pa.id < pb.id;
            });
        }
    }

    const PostRecord& submission() const { return posts_.front(); }
    std::size_t size() const { return posts_.size(); }
    const std::vector<PostRecord>& posts() const { return posts_; }
    std::size_t first_line() const { return first_line_; }
    std::size_t line_of(std::size_t post_index) const { return lines_[post_index]; }

    bool contains(const std::string& id) const { return index_.count(id) > 0; }

    const PostRecord& post(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw Error("unknown post id: " + id);
        return posts_[it->second];
    }

    const std::vector<std::string>& children_of(const std::string& id) const {
        static const std::vector<std::string> kNone;
        auto it = children_.find(id);
        return it == children_.end() ? kNone : it->second;
    }

private:
    std::vector<PostRecord> posts_;
    std::vector<std::size_t> lines_;
    std::unordered_map<std::string, std::size_t> index_;
    std::unordered_map<std::string, std::vector<std::string>> children_;
    std::size_t first_line_ = 0;
};

// Root-to-leaf path; pointers stay valid for the owning tree's lifetime.
struct ThreadPath {
    std::vector<const PostRecord*> posts;
    std::size_t length() const { return posts.size(); }
    const PostRecord& leaf() const { return *posts.back(); }
};

struct Corpus {
    std::vector<DiscussionTree> trees;

    std::size_t post_count() const {
        std::size_t n = 0;
        for (const auto& t : trees) n += t.size();
        return n;
    }

    // Corpus order = input-stream order across all trees.
    std::vector<const PostRecord*> posts_in_corpus_order() const {
        std::vector<std::pair<std::size_t, const PostRecord*>> tagged;
        for (const auto& t : trees) {
            for (std::size_t i = 0; i < t.size(); ++i) {
                tagged.emplace_back(t.line_of(i), &t.posts()[i]);
            }
        }
        std::sort(tagged.begin(), tagged.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<const PostRecord*> out;
        out.reserve(tagged.size());
        for (const auto& [line, p] : tagged) out.push_back(p);
        return out;
    }
};

struct IngestResult {
    Corpus corpus;
    QuarantineReport quarantine;
};

namespace detail {

inline bool parse_post_line(const std::string& line, PostRecord& rec, std::string& err) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
        err = std::string("malformed json: ") + e.what();
        return false;
    }
    if (!j.is_object()) {
        err = "record is not an object";
        return false;
    }
    static const std::set<std::string> kKnown = {"id",         "parent_id", "submission_id",
                                                 "author",     "body",      "title",
                                                 "created_at", "violated_rules", "delta_awarded"};
    for (const auto& [key, value] : j.items()) {
        if (!kKnown.count(key)) {
            err = "unknown field '" + key + "'";
            return false;
        }
    }
    auto need_string = [&](const char* key, std::string& out) {
        if (!j.contains(key) || !j[key].is_string()) {
            err = std::string("missing or non-string field '") + key + "'";
            return false;
        }
        out = j[key].get<std::string>();
        return true;
    };
    if (!need_string("id", rec.id)) return false;
    if (!need_string("submission_id", rec.submission_id)) return false;
    if (!need_string("author", rec.author)) return false;
    if (!need_string("body", rec.body)) return false;
    if (!j.contains("created_at") || !j["created_at"].is_number_integer()) {
        err = "missing or non-integer field 'created_at'";
        return false;
    }
    rec.created_at = j["created_at"].get<long long>();
    if (j.contains("parent_id")) {
        if (!j["parent_id"].is_string()) {
            err = "non-string field 'parent_id'";
            return false;
        }
        rec.parent_id = j["parent_id"].get<std::string>();
    }
    if (j.contains("title")) {
        if (!j["title"].is_string()) {
            err = "non-string field 'title'";
            return false;
        }
        rec.title = j["title"].get<std::string>();
    }
    if (j.contains("violated_rules")) {
        if (!j["violated_rules"].is_array()) {
            err = "field 'violated_rules' must be an integer array";
            return false;
        }
        for (const auto& v : j["violated_rules"]) {
            if (!v.is_number_integer()) {
                err = "field 'violated_rules' must be an integer array";
                return false;
            }
            rec.violated_rules.insert(v.get<int>());
        }
    }
    if (j.contains("delta_awarded")) {
        if (!j["delta_awarded"].is_boolean()) {
            err = "non-boolean field 'delta_awarded'";
            return false;
        }
        rec.delta_awarded = j["delta_awarded"].get<bool>();
    }
    return true;
}

}  // namespace detail

// Single-pass, deterministic. Records that cannot be attached to a tree are
// quarantined with a reason; the stream is never aborted by a bad record.
inline IngestResult ingest(std::istream& in) {
    IngestResult result;
    struct Raw {
        PostRecord rec;
        std::size_t line_no;
    };
    std::vector<Raw> raws;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        bool blank = true;
        for (char c : line) {
            if (!std::isspace(static_cast<unsigned char>(c))) {
                blank = false;
                break;
            }
        }
        if (blank) continue;
        PostRecord rec;
        std::string err;
        if (!detail::parse_post_line(line, rec, err)) {
            result.quarantine.entries.push_back({line_no, "", err});
            continue;
        }
        if (seen_ids.count(rec.id)) {
            result.quarantine.entries.push_back({line_no, rec.id, "duplicate id"});
            continue;
        }
        if (rec.is_submission() && rec.id != rec.submission_id) {
            result.quarantine.entries.push_back({line_no, rec.id, "submission id differs from submission_id"});
            continue;
        }
        seen_ids.insert(rec.id);
        raws.push_back({std::move(rec), line_no});
    }

    // Group by submission id, keeping first-appearance order of groups.
    std::vector<std::string> group_order;
    std::unordered_map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < raws.size(); ++i) {
        const std::string& sid = raws[i].rec.submission_id;
        if (!groups.count(sid)) group_order.push_back(sid);
        groups[sid].push_back(i);
    }

    constexpr std::size_t kNoSubmission = std::numeric_limits<std::size_t>::max();
    for (const std::string& sid : group_order) {
        const auto& members = groups[sid];
        std::size_t submission_at = kNoSubmission;
        for (std::size_t m : members) {
            if (raws[m].rec.is_submission()) {
                if (submission_at == kNoSubmission) {
                    submission_at = m;
                } else {
                    result.quarantine.entries.push_back(
                        {raws[m].line_no, raws[m].rec.id, "duplicate submission for " + sid});
                }
            }
        }
        if (submission_at == kNoSubmission) {
            for (std::size_t m : members) {
                result.quarantine.entries.push_back(
                    {raws[m].line_no, raws[m].rec.id, "no submission record for " + sid});
            }
            continue;
        }

        // Reachability from the submission decides tree membership; anything
        // left over has a dangling (or cyclic) parent chain.
        std::unordered_map<std::string, std::vector<std::size_t>> by_parent;
        for (std::size_t m : members) {
            if (raws[m].rec.is_submission() && m != submission_at) continue;
            if (!raws[m].rec.is_submission()) by_parent[*raws[m].rec.parent_id].push_back(m);
        }
        std::vector<std::size_t> reached;
        std::unordered_set<std::string> visited;
        std::vector<std::string> frontier{raws[submission_at].rec.id};
        visited.insert(raws[submission_at].rec.id);
        while (!frontier.empty()) {
            std::string cur = std::move(frontier.back());
            frontier.pop_back();
            auto it = by_parent.find(cur);
            if (it == by_parent.end()) continue;
            for (std::size_t m : it->second) {
                if (visited.insert(raws[m].rec.id).second) {
                    reached.push_back(m);
                    frontier.push_back(raws[m].rec.id);
                }
            }
        }
        std::sort(reached.begin(), reached.end());
        std::unordered_set<std::size_t> reached_set(reached.begin(), reached.end());
        for (std::size_t m : members) {
            if (m == submission_at) continue;
            if (raws[m].rec.is_submission()) continue;  // already quarantined above
            if (!reached_set.count(m)) {
                result.quarantine.entries.push_back({raws[m].line_no, raws[m].rec.id, "dangling parent"});
            }
        }

        std::vector<PostRecord> comments;
        std::vector<std::size_t> comment_lines;
        comments.reserve(reached.size());
        for (std::size_t m : reached) {
            comments.push_back(raws[m].rec);
            comment_lines.push_back(raws[m].line_no);
        }
        result.corpus.trees.emplace_back(raws[submission_at].rec, std::move(comments),
                                         std::move(comment_lines), raws[submission_at].line_no);
    }

    std::sort(result.quarantine.entries.begin(), result.quarantine.entries.end(),
              [](const QuarantineEntry& a, const QuarantineEntry& b) { return a.line_no < b.line_no; });
    return result;
}

// One path per leaf, depth-first in sibling order.
inline std::vector<ThreadPath> enumerate_threads(const DiscussionTree& tree) {
    std::vector<ThreadPath> out;
    std::vector<const PostRecord*> path;
    struct Frame {
        const PostRecord* post;
        std::size_t next_child;
    };
    std::vector<Frame> stack;
    stack.push_back({&tree.submission(), 0});
    path.push_back(&tree.submission());
    while (!stack.empty()) {
        Frame& top = stack.back();
        const auto& kids = tree.children_of(top.post->id);
        if (kids.empty() && top.next_child == 0) {
            out.push_back(ThreadPath{path});
        }
        if (top.next_child < kids.size()) {
            const PostRecord* child = &tree.post(kids[top.next_child]);
            ++top.next_child;
            stack.push_back({child, 0});
            path.push_back(child);
        } else {
            stack.pop_back();
            path.pop_back();
        }
    }
    return out;
}

struct CorpusStats {
    std::size_t post_count = 0;
    std::size_t ad_hominem_count = 0;
    double ad_hominem_rate = 0.0;
    std::size_t threads_total = 0;
    std::size_t threads_with_single_ah = 0;
    double single_ah_last_fraction = 0.0;
    double ah_reply_to_ah_fraction = 0.0;
    // Relative position of the first ad hominem comment, 10 equal bins on [0,1].
    std::array<std::size_t, 10> first_ah_relative_position_histogram{};
    double attacker_out_of_blue_fraction = 0.0;
    double attacker_with_prior_normal_argument_fraction = 0.0;
    double op_committed_ah_fraction = 0.0;
    double two_person_interplay_fraction = 0.0;
    std::map<std::string, std::size_t> per_submission_ah_counts;
};

// Thread-level statistics consider ad hominem *comments* (non-submission posts);
// corpus-level counts cover every post.
inline CorpusStats compute_stats(const Corpus& corpus) {
    if (corpus.trees.empty()) throw Error("compute_stats: empty corpus");
    CorpusStats s;

    std::size_t replies_to_ah = 0;
    std::size_t ah_replies_to_ah = 0;
    for (const auto& tree : corpus.trees) {
        std::size_t tree_ah = 0;
        for (const auto& p : tree.posts()) {
            ++s.post_count;
            if (p.is_ad_hominem()) {
                ++s.ad_hominem_count;
                ++tree_ah;
            }
            if (!p.is_submission() && p.is_ad_hominem()) {
                for (const auto& kid : tree.children_of(p.id)) {
                    ++replies_to_ah;
                    if (tree.post(kid).is_ad_hominem()) ++ah_replies_to_ah;
                }
            }
        }
        s.per_submission_ah_counts[tree.submission().id] = tree_ah;
    }
    s.ad_hominem_rate =
        s.post_count == 0 ? 0.0 : static_cast<double>(s.ad_hominem_count) / static_cast<double>(s.post_count);
    s.ah_reply_to_ah_fraction =
        replies_to_ah == 0 ? 0.0 : static_cast<double>(ah_replies_to_ah) / static_cast<double>(replies_to_ah);

    std::size_t ah_threads = 0;
    std::size_t single_ah_last = 0;
    std::size_t out_of_blue = 0;
    std::size_t prior_normal = 0;
    std::size_t op_committed = 0;
    std::size_t two_person = 0;
    for (const auto& tree : corpus.trees) {
        for (const auto& thread : enumerate_threads(tree)) {
            ++s.threads_total;
            std::size_t ah_in_thread = 0;
            std::size_t first_ah_index = 0;
            for (std::size_t i = 1; i < thread.posts.size(); ++i) {
                if (thread.posts[i]->is_ad_hominem()) {
                    if (ah_in_thread == 0) first_ah_index = i;
                    ++ah_in_thread;
                }
            }
            if (ah_in_thread == 0) continue;
            ++ah_threads;

            if (ah_in_thread == 1) {
                ++s.threads_with_single_ah;
                if (first_ah_index == thread.posts.size() - 1) ++single_ah_last;
            }

            // Exact decile binning: comments before the first ad hominem,
            // proportional to the number of comments in the thread.
            const std::size_t num = first_ah_index - 1;
            const std::size_t den = thread.posts.size() - 1;
            std::size_t bin = (10 * num) / den;
            if (bin > 9) bin = 9;
            ++s.first_ah_relative_position_histogram[bin];

            const std::string& attacker = thread.posts[first_ah_index]->author;
            bool appeared_before = false;
            for (std::size_t i = 0; i < first_ah_index; ++i) {
                if (thread.posts[i]->author == attacker) {
                    appeared_before = true;
                    break;
                }
            }
            if (appeared_before) {
                ++prior_normal;
            } else {
                ++out_of_blue;
            }

            const std::string& op = thread.posts.front()->author;
            bool op_ah = false;
            for (std::size_t i = 1; i < thread.posts.size(); ++i) {
                if (thread.posts[i]->is_ad_hominem() && thread.posts[i]->author == op) {
                    op_ah = true;
                    break;
                }
            }
            if (op_ah) ++op_committed;

            std::set<std::string> authors;
            for (const auto* p : thread.posts) authors.insert(p->author);
            if (authors.size() == 2) ++two_person;
        }
    }
    if (s.threads_with_single_ah > 0) {
        s.single_ah_last_fraction =
            static_cast<double>(single_ah_last) / static_cast<double>(s.threads_with_single_ah);
    }
    if (ah_threads > 0) {
        const double n = static_cast<double>(ah_threads);
        s.attacker_out_of_blue_fraction = static_cast<double>(out_of_blue) / n;
        s.attacker_with_prior_normal_argument_fraction = static_cast<double>(prior_normal) / n;
        s.op_committed_ah_fraction = static_cast<double>(op_committed) / n;
        s.two_person_interplay_fraction = static_cast<double>(two_person) / n;
    }
    return s;
}

inline void write_stats_report(const CorpusStats& s, std::ostream& out) {
    out.precision(10);
    out << "post_count\t" << s.post_count << "\n";
    out << "ad_hominem_count\t" << s.ad_hominem_count << "\n";
    out << "ad_hominem_rate\t" << s.ad_hominem_rate << "\n";
    out << "threads_total\t" << s.threads_total << "\n";
    out << "threads_with_single_ah\t" << s.threads_with_single_ah << "\n";
    out << "single_ah_last_fraction\t" << s.single_ah_last_fraction << "\n";
    out << "ah_reply_to_ah_fraction\t" << s.ah_reply_to_ah_fraction << "\n";
    out << "attacker_out_of_blue_fraction\t" << s.attacker_out_of_blue_fraction << "\n";
    out << "attacker_with_prior_normal_argument_fraction\t" << s.attacker_with_prior_normal_argument_fraction
        << "\n";
    out << "op_committed_ah_fraction\t" << s.op_committed_ah_fraction << "\n";
    out << "two_person_interplay_fraction\t" << s.two_person_interplay_fraction << "\n";
    for (const auto& [sid, count] : s.per_submission_ah_counts) {
        out << "submission_ah_count\t" << sid << "\t" << count << "\n";
    }
}

inline void write_histogram_tsv(const CorpusStats& s, std::ostream& out) {
    out << "bin_start\tbin_end\tcount\n";
    for (std::size_t b = 0; b < s.first_ah_relative_position_histogram.size(); ++b) {
        out << (static_cast<double>(b) / 10.0) << "\t" << (static_cast<double>(b + 1) / 10.0) << "\t"
            << s.first_ah_relative_position_histogram[b] << "\n";
    }
}

}  // namespace adhom
