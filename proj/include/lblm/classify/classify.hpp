#pragma once

#include "lblm/backbone/checkpoint.hpp"
#include "lblm/backbone/model.hpp"
#include "lblm/diff/optim.hpp"
#include "lblm/signal/types.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <vector>

namespace lblm::classify {

enum class ClassifierKind { linear, convolutional, spatio_temporal };
std::string_view classifier_kind_name(ClassifierKind k);
ClassifierKind parse_classifier_kind(std::string_view s);

enum class Task { word24, semantic6 };
std::string_view task_name(Task t);
Task parse_task(std::string_view s);
int num_classes(Task t);
// Label of a trial segment under the task.
int task_label(const signal::TrialSegment& s, Task t);

struct StClassifierConfig {
    ClassifierKind kind = ClassifierKind::spatio_temporal;
    std::vector<int> inception_kernels = {1, 3, 5, 7};
    int spatial_out_channels = 16;
    int temporal_channels = 16;  // split evenly across inception branches
    int temporal_kernel = 5;
    int num_classes = 6;
    int channels = 8;

    void validate() const;
};

nlohmann::json to_json(const StClassifierConfig& c);
StClassifierConfig classifier_config_from_json(const nlohmann::json& j);

// Classifier parameters, all named "cls.*". d is the backbone width.
diff::ParamStore init_classifier(const StClassifierConfig& c, int d, std::uint64_t seed);

// features: rows ordered (trial, channel, token), `tokens` rows per channel.
// Returns logits, one row per trial. Channel count mismatch throws ShapeError.
diff::Var st_forward(backbone::Binder& b, const StClassifierConfig& c, diff::Var features, int tokens);

// Softmax probabilities of st_forward.
Mat st_probabilities(backbone::Binder& b, const StClassifierConfig& c, diff::Var features, int tokens);

struct SplitPlan {
    struct Sessions {
        std::vector<int> train;
        int val = -1;
        int test = -1;
    };
    std::map<int, Sessions> per_subject;

    void validate() const;
    enum class Role { train, val, test, unused };
    Role role(int subject, int session) const;
};

// Per subject: the last session is test, the one before it is val, the rest train.
// Needs at least three sessions per subject.
SplitPlan default_split(const std::vector<std::pair<int, int>>& subject_sessions);
SplitPlan default_split(const std::vector<signal::TrialSegment>& segments);

struct EvalReport {
    Task task = Task::semantic6;
    double accuracy = 0.0;
    std::vector<double> per_class;  // NaN-free: classes without trials report 0
    std::vector<std::vector<int>> confusion;  // [true][predicted]
    int n_trials = 0;
    std::string checkpoint_hash;
    // For word-level evaluations: accuracy after mapping both labels through the group table.
    double semantic_from_word = -1.0;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport make_report(Task task, const std::vector<int>& truth, const std::vector<int>& predicted);

struct FinetuneConfig {
    Task task = Task::semantic6;
    int epochs = 10;
    int batch = 16;  // trials per optimizer step
    diff::TrainHyper hyper;
    bool freeze_backbone = false;
    // Backbone learning rate relative to the classifier's.
    double backbone_lr_scale = 1.0;
    // Leading epochs that train the classifier alone on a frozen backbone.
    int head_warmup_epochs = 0;
    double revin_eps = 1e-5;
    std::uint64_t seed = 0;
    StClassifierConfig classifier;

    FinetuneConfig() { hyper.lr_base = 1e-4; }
    void validate() const;
};

nlohmann::json to_json(const FinetuneConfig& c);
FinetuneConfig finetune_config_from_json(const nlohmann::json& j);

struct FinetuneEpoch {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct FinetuneResult {
    backbone::Checkpoint checkpoint;  // parameters of the best-val epoch
    EvalReport val;
    std::vector<FinetuneEpoch> log;
    int best_epoch = -1;
};

// Trains backbone and classifier on the split's train sessions and keeps the
// epoch with the highest val accuracy (earliest on ties). `init` may be at any
// stage; pretraining heads are dropped.
FinetuneResult finetune(const backbone::Checkpoint& init, const std::vector<signal::TrialSegment>& trials,
                        const SplitPlan& split, const FinetuneConfig& cfg);

// Argmax predictions for each segment (RevIN applied per channel).
std::vector<int> predict(backbone::Checkpoint& ckpt, const std::vector<const signal::TrialSegment*>& trials);

// Single pass over the split's test sessions (or val with role = val).
EvalReport evaluate(backbone::Checkpoint& ckpt, const std::vector<signal::TrialSegment>& trials,
                    const SplitPlan& split, SplitPlan::Role role = SplitPlan::Role::test);

}  // namespace lblm::classify
