#include "molllama/prompts.hpp"

#include <algorithm>
#include <stdexcept>

#include "molllama/hash.hpp"

namespace molllama::prompts {

const Template& structural_generation() {
  static const Template t{
      "You are a chemical assistant and you are given a molecule with the IUPAC name.\n"
      "Provide a detailed explanation of the given molecule at the molecular structural level. Explain which "
      "substructures and functional groups are contained and how they are connected.",
      "Input molecule (IUPAC name): {IUPAC name}"};
  return t;
}

const Template& feature_generation() {
  static const Template t{
      "You are a {level} assistant that can analyze the {level} properties of a single molecule. A molecule is given "
      "as the IUPAC name, accompanied by a description.\n"
      "Based on the provided IUPAC name and the description, explain **the {level} properties** in a detailed manner "
      "by relating the {level} properties to its structural information.",
      "Input molecule (IUPAC name): {IUPAC name}\nDescription: {Description}"};
  return t;
}

const Template& conversation_generation() {
  static const Template t{
      "You are an AI chemical assistant with extensive knowledge of molecular properties. You are given a molecule "
      "with the IUPAC name and its description.\n"
      "Your task is to design a conversation between you (e.g. AI chemical assistant) and a user asking about this "
      "molecule. Design a sequence of pairs of questions and answers that gradually deepen the level of the "
      "conversation, from structural information and chemical properties to biological functionalities.\n"
      "Include questions asking about the molecule's structural, chemical, and biological features, including "
      "functional groups, the most specific compound species name, corresponding chemical and biological "
      "properties, and functionalities, etc.",
      "Input molecule (IUPAC name): {IUPAC name}\nDescription: {Description}"};
  return t;
}

const Template& filtering() {
  static const Template t{
      "You are an assistant specializing in chemistry and biology. You are provided with a molecule's IUPAC name and "
      "its {level} description.\n"
      "Your task is to evaluate the factual accuracy of the given description based on the provided IUPAC name.\n"
      "Assign a score from 1 to 4 based on the following criteria:\n"
      "1: All contents are factually incorrect\n"
      "2: Some contents are factually correct, but most are factually incorrect\n"
      "3: Most contents are factually correct, but some are factually incorrect\n"
      "4: All contents are factually correct\n"
      "Indicate your score in the format: \"Score: ...\".",
      "Input molecule (IUPAC name): {IUPAC name}\nDescription: {Description}"};
  return t;
}

const Template& pairwise_judge() {
  static const Template t{
      "You are a helpful assistant specializing in chemistry and biology. Your task is to evaluate the performance "
      "of two AI assistants in responding to a user question about a molecular explanation.\n"
      "For your reference, the SMILES notation, IUPAC name, and a description of the given molecule are provided.\n"
      "Evaluate each assistant's response based on the following criteria: helpfulness, relevance, accuracy, and "
      "level of detail. Rate each criterion on a scale of 1 to 10, where a higher score indicates better "
      "performance. Additionally, provide an overall score for each assistant's response on a scale of 1 to 10.\n"
      "First output the scores of each assistant in the following format:\n"
      "[Assistant n]\n"
      "- Helpfulness: ...\n"
      "- Relevance: ...\n"
      "- Accuracy: ...\n"
      "- Level of detail: ...\n"
      "- Overall: ...\n"
      "In the subsequent line, please provide a comprehensive explanation of your evaluation, avoiding any potential "
      "bias and ensuring that the order in which the responses were presented does not affect your judgment.",
      "[Molecule Information]\n"
      "SMILES: {SMILES}\n"
      "IUPAC Name: {IUPAC name}\n"
      "Description: {Description}\n"
      "[Question]\n"
      "Explain the {level} features of the given molecule.\n"
      "[Assistant 1]\n"
      "{Response of Assistant 1}\n"
      "[End of Assistant 1]\n"
      "[Assistant 2]\n"
      "{Response of Assistant 2}\n"
      "[End of Assistant 2]"};
  return t;
}

const Template& reasoning_judge() {
  static const Template t{
      "You are a helpful assistant specializing in chemistry and biology, whose role is to evaluate the quality of "
      "the reasoning process of an AI assistant in predicting the permeability of molecules in the Parallel "
      "Artificial Membrane Permeability Assay (PAMPA).\n"
      "For your reference, the SMILES of the given molecule is provided.\n"
      "Evaluate the quality of each assistant's response based on the criteria below:\n"
      "Fidelity: It evaluates the soundness and relevance of the reasoning process by assessing whether the "
      "reasoning is valid to appropriately address the given task.\n"
      "Helpfulness: It evaluates the quality of the reasoning process by assessing whether the reasoning is clear, "
      "informative, and helpful to the user.\n"
      "First, provide an explanation of your assessment, and then evaluate the score on a scale of 1 to 10, where a "
      "higher score indicates better quality. Follow the format in the below example:\n"
      "Explanation of the evaluation:\n"
      "Final Decision:\n"
      "[Assistant n]\n"
      "- Fidelity : ...\n"
      "- Helpfulness : ...",
      "[Molecule Information]\n"
      "SMILES: {SMILES}\n"
      "[Assistant 1]\n"
      "{Response of Assistant 1}\n"
      "[End of Assistant 1]\n"
      "[Assistant 2]\n"
      "{Response of Assistant 2}\n"
      "[End of Assistant 2]"};
  return t;
}

const std::string& conversation_system() {
  static const std::string s =
      "You are a helpful assistant specializing in chemistry and biology. The instruction that describes a task is "
      "given, paired with molecules. Write a response that appropriately completes the request.";
  return s;
}

const std::string& instruction_system() {
  static const std::string s =
      "You are a helpful assistant specializing in chemistry and biology. The instruction that describes a task is "
      "given, paired with molecules. Provide a comprehensive response that appropriately completes the request.";
  return s;
}

const std::string& system_for(DataType type) {
  return type == DataType::kConversation ? conversation_system() : instruction_system();
}

const std::vector<std::string>& instructions(DataType type) {
  static const std::vector<std::string> structural = {
      "Explain the components and how they are linked within the provided molecule.",
      "Detail the structural parts of the molecule and their interconnections.",
      "Outline the individual subunits of the molecule and describe their arrangement.",
      "Provide an analysis of the molecular substructures and how they are bonded together.",
      "Identify the segments of the molecule and elaborate on their attachments.",
      "Break down the molecular structure into its subcomponents and describe how they are connected.",
      "Map out the substructures within the molecule and illustrate how they are linked.",
  };
  static const std::vector<std::string> chemical = {
      "Provide an in-depth explanation of the chemical characteristics of the given molecule.",
      "Elaborate on the detailed chemical attributes and properties of the molecule.",
      "Describe the chemical properties of the provided molecule with comprehensive detail.",
      "Offer a thorough analysis of the chemical characteristics of the compound.",
      "Discuss the chemical properties of the given compound extensively and in detail.",
      "Present an in-depth overview of the chemical attributes of the provided compound.",
      "Explain the detailed aspects of the chemical properties of the molecule.",
      "Analyze the the molecule's chemical properties with an in-depth approach.",
      "Present a detailed report on the chemical traits of the compound.",
  };
  static const std::vector<std::string> biological = {
      "Provide a comprehensive explanation of the biological characteristics of the given molecule, focusing on how "
      "its main substructures relate to its biological properties.",
      "Discuss the molecule's biological properties thoroughly, emphasizing the connection between its key "
      "substructures and their functions.",
      "Elaborate in detail on the biological attributes of the provided compound, explaining how its primary "
      "substructures are linked to its properties.",
      "Analyze the biological properties of the given compound, providing an in-depth explanation of how the core "
      "substructures of the molecule influence these properties.",
      "Describe the biological characteristics of the given molecule in detail, paying particular attention to how "
      "its main structural components affect its behavior.",
      "Offer an in-depth discussion of the biological traits of the molecule, specifically highlighting the "
      "relationship between the core parts of the molecule and its properties.",
      "Present a detailed analysis of the biological properties of the provided molecule, focusing on how the "
      "essential substructures within the molecule correlate with these properties.",
      "Give an in-depth explanation of the biological properties of the provided molecule, especially how its core "
      "substructures are associated with these properties.",
      "Outline the biological properties of the given compound comprehensively, emphasizing the interplay between "
      "its main substructures and its biological behavior.",
  };
  static const std::vector<std::string> none;
  switch (type) {
    case DataType::kStructural:
      return structural;
    case DataType::kChemFeature:
      return chemical;
    case DataType::kBioFeature:
      return biological;
    case DataType::kConversation:
      return none;
  }
  return none;
}

const std::string& pampa_system_intro() {
  static const std::string s =
      "You are a drug discovery assistant tasked with predicting the permeability of a molecule in the Parallel "
      "Artificial Membrane Permeability Assay (PAMPA). Specifically, your role is to determine whether a molecule has "
      "high permeability or low-to-moderate permeability to the artificial membrane.";
  return s;
}

const std::string& pampa_task_info() {
  static const std::string s =
      "Consider the following properties of molecules:\n"
      "1) Lipophilicity: Higher lipophilicity generally correlates with increased permeability, up to a certain "
      "threshold.\n"
      "2) Molecular Size and Weight: Smaller molecules tend to have higher permeability.\n"
      "3) Polarity: Low polar surface area and low hydrogen bond donors/acceptors are associated with higher "
      "permeability.\n"
      "4) Charge: Neutral molecules typically have better permeability compared to charged species, which are less "
      "likely to diffuse through the hydrophobic lipid bilayer.\n"
      "5) Rigidity: A high degree of rigidity often permeate membranes more easily.\n"
      "6) Aromaticity: The presence of aromatic rings can influence lipophilicity and molecular interactions with the "
      "lipid bilayer, thereby affecting permeability.\n"
      "7) Hydration Energy: Lower hydration energy generally improves membrane permeation.\n"
      "8) Membrane Affinity: Compounds with a balanced affinity for both the aqueous phase and the lipid bilayer tend "
      "to exhibit better PAMPA permeability.";
  return s;
}

const std::string& pampa_answer_format() {
  static const std::string s =
      "Your final answer should be formatted as either : 'Final answer : High permeability.' or 'Low-to-moderate "
      "permeability.'";
  return s;
}

const std::string& pampa_user() {
  static const std::string s = "Determine the permeability of the given molecule to the artificial membrane.";
  return s;
}

const std::string& pampa_cot_suffix() {
  static const std::string s = "Please provide a rationale for your answer.";
  return s;
}

std::vector<ChatMessage> training_messages(const InstructionSample& sample) {
  if (!sample.messages.empty() && sample.messages.front().role == Role::kSystem) return sample.messages;
  std::vector<ChatMessage> out;
  out.push_back({Role::kSystem, system_for(sample.data_type)});
  const auto& list = instructions(sample.data_type);
  const bool has_user = std::any_of(sample.messages.begin(), sample.messages.end(),
                                    [](const ChatMessage& m) { return m.role == Role::kUser; });
  if (!list.empty() && !has_user) {
    const std::string key = sample.molecule_id + "/" + std::string(data_type_name(sample.data_type));
    out.push_back({Role::kUser, list[fnv1a(key) % list.size()]});
  }
  out.insert(out.end(), sample.messages.begin(), sample.messages.end());
  return out;
}

std::string fill(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    const auto close = text.find('}', open);
    if (close == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    const std::string key(text.substr(open + 1, close - open - 1));
    const auto it = values.find(key);
    out.append(text.substr(pos, open - pos));
    if (it == values.end()) {
      throw std::invalid_argument("unresolved placeholder {" + key + "}");
    }
    out.append(it->second);
    pos = close + 1;
  }
  return out;
}

}  // namespace molllama::prompts
